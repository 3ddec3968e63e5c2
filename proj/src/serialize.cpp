#include "mapattack/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "mapattack/errors.hpp"

namespace mapattack {

namespace {

// Line-oriented reader that tracks the 1-based line number for errors.
class LineReader {
public:
  LineReader(const std::filesystem::path& path)
      : path_(path.string()), in_(path) {
    if (!in_) throw ParseError(path_, 0, "cannot open file");
  }

  // Next non-empty line; throws when the file ends early.
  std::string next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw ParseError(path_, line_no_ + 1,
                     std::string("unexpected end of file, expected ") + what);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path_, line_no_, what);
  }

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_no_; }

private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

std::size_t parse_size(const std::string& tok, const LineReader& r,
                       const char* what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(r.path(), r.line(),
                     std::string("expected ") + what + ", got '" + tok + "'");
  }
  return v;
}

void parse_doubles_line(LineReader& r, const char* what, std::size_t count,
                        double* out) {
  const std::string line = r.next(what);
  const auto toks = split_ws(line);
  if (toks.size() != count) {
    r.fail(std::string("expected ") + std::to_string(count) + " values for " +
           what + ", got " + std::to_string(toks.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = parse_double(toks[i], r.path(), r.line());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token, const std::string& path,
                    std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(path, line, "malformed number '" + token + "'");
  }
  return v;
}

void save_model(const Model& m, const std::filesystem::path& path) {
  validate_model(m);
  auto out = open_out(path);
  out << "MAPNN v1 " << m.input_dim << ' ' << m.class_count << ' '
      << m.layers.size() << '\n';
  for (const Layer& layer : m.layers) {
    if (const auto* aff = std::get_if<Affine>(&layer)) {
      out << "affine " << aff->in << ' ' << aff->out << '\n';
      for (std::size_t o = 0; o < aff->out; ++o) {
        for (std::size_t i = 0; i < aff->in; ++i) {
          out << (i ? " " : "") << format_double(aff->w[o * aff->in + i]);
        }
        out << '\n';
      }
      for (std::size_t o = 0; o < aff->out; ++o) {
        out << (o ? " " : "") << format_double(aff->b[o]);
      }
      out << '\n';
    } else {
      out << "relu\n";
    }
  }
}

Model load_model(const std::filesystem::path& path) {
  LineReader r(path);
  const auto header = split_ws(r.next("MAPNN header"));
  if (header.empty() || header[0] != "MAPNN") {
    r.fail("not a MAPNN file");
  }
  if (header.size() != 5) r.fail("malformed MAPNN header");
  if (header[1] != "v1") {
    throw UnsupportedVersionError(r.path(), header[1]);
  }

  Model m;
  m.input_dim = parse_size(header[2], r, "input_dim");
  m.class_count = parse_size(header[3], r, "class_count");
  const std::size_t layer_count = parse_size(header[4], r, "layer_count");

  for (std::size_t li = 0; li < layer_count; ++li) {
    const auto toks = split_ws(r.next("layer descriptor"));
    if (toks[0] == "relu") {
      if (toks.size() != 1) r.fail("malformed relu line");
      m.layers.emplace_back(Relu{});
    } else if (toks[0] == "affine") {
      if (toks.size() != 3) r.fail("malformed affine line");
      Affine aff;
      aff.in = parse_size(toks[1], r, "affine in");
      aff.out = parse_size(toks[2], r, "affine out");
      aff.w.resize(aff.in * aff.out);
      aff.b.resize(aff.out);
      for (std::size_t o = 0; o < aff.out; ++o) {
        parse_doubles_line(r, "weight row", aff.in, aff.w.data() + o * aff.in);
      }
      parse_doubles_line(r, "bias row", aff.out, aff.b.data());
      m.layers.emplace_back(std::move(aff));
    } else {
      r.fail("unknown layer kind '" + toks[0] + "'");
    }
  }
  validate_model(m);
  return m;
}

void save_samples(const LabeledBatch& batch, std::size_t class_count,
                  const std::filesystem::path& path) {
  validate_batch(batch, batch.inputs.extent(1), class_count);
  auto out = open_out(path);
  const std::size_t n = batch.size();
  const std::size_t dim = batch.inputs.extent(1);
  out << "MAPDATA v1 " << n << ' ' << dim << ' ' << class_count << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    out << batch.labels[r];
    const double* row = batch.inputs.data.data() + r * dim;
    for (std::size_t c = 0; c < dim; ++c) out << ' ' << format_double(row[c]);
    out << '\n';
  }
}

LabeledBatch load_samples(const std::filesystem::path& path,
                          std::size_t* class_count_out) {
  LineReader r(path);
  const auto header = split_ws(r.next("MAPDATA header"));
  if (header.empty() || header[0] != "MAPDATA") {
    r.fail("not a MAPDATA file");
  }
  if (header.size() != 5) r.fail("malformed MAPDATA header");
  if (header[1] != "v1") {
    throw UnsupportedVersionError(r.path(), header[1]);
  }
  const std::size_t n = parse_size(header[2], r, "sample count");
  const std::size_t input_dim = parse_size(header[3], r, "input_dim");
  const std::size_t class_count = parse_size(header[4], r, "class_count");

  LabeledBatch batch;
  batch.inputs = Tensor::zeros({n, input_dim});
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto toks = split_ws(r.next("sample line"));
    if (toks.size() != input_dim + 1) {
      r.fail("expected a label and " + std::to_string(input_dim) + " values");
    }
    batch.labels[i] = static_cast<int>(parse_size(toks[0], r, "label"));
    for (std::size_t c = 0; c < input_dim; ++c) {
      batch.inputs.data[i * input_dim + c] =
          parse_double(toks[c + 1], r.path(), r.line());
    }
  }
  ensure_finite(batch.inputs, "load_samples");
  validate_batch(batch, input_dim, class_count);
  if (class_count_out) *class_count_out = class_count;
  return batch;
}

}  // namespace mapattack
