#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mapattack/nn.hpp"

namespace mapattack {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Strict double parse of a whole token; throws on trailing garbage.
double parse_double(const std::string& token, const std::string& path,
                    std::size_t line);

// Model files.
//   MAPNN v1 <input_dim> <class_count> <layer_count>
// followed per layer by either a line `relu`, or `affine <in> <out>` with
// <out> weight rows (each <in> values) and one bias line of <out> values.
// Round-trips bit-exactly.
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Labeled sample files.
//   MAPDATA v1 <n> <input_dim> <class_count>
// then n lines of `<label> <x0> ... <x(d-1)>`.
void save_samples(const LabeledBatch& batch, std::size_t class_count,
                  const std::filesystem::path& path);
LabeledBatch load_samples(const std::filesystem::path& path,
                          std::size_t* class_count_out = nullptr);

}  // namespace mapattack
