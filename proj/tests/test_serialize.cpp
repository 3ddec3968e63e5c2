#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/map_trainer.hpp"
#include "mapattack/serialize.hpp"

using namespace mapattack;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mapattack_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("model files: random model round-trips bit-exactly") {
  Rng rng(2024);
  Model m = random_model(rng, 7, {9, 5}, 4);
  // make sure awkward values survive the text form
  std::get<Affine>(m.layers[0]).w[0] = 1.0 / 3.0;
  std::get<Affine>(m.layers[0]).w[1] = 1e-17;
  std::get<Affine>(m.layers[0]).b[0] = -0.0;

  const auto path = temp_file("roundtrip.nn");
  save_model(m, path);
  const Model back = load_model(path);
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.class_count == m.class_count);
  REQUIRE(back.layers.size() == m.layers.size());
  CHECK(back.layers == m.layers);

  // a second save must produce identical bytes
  const auto path2 = temp_file("roundtrip2.nn");
  save_model(back, path2);
  std::ifstream a(path), b(path2);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("model files: truncated file raises a parse error naming the line") {
  Rng rng(9);
  const Model m = random_model(rng, 4, {5}, 3);
  const auto path = temp_file("truncated.nn");
  save_model(m, path);

  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << all.substr(0, all.size() / 2);
  out.close();

  try {
    load_model(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() > 0);
  }
}

TEST_CASE("model files: version mismatch raises the distinct version error") {
  const auto path = temp_file("badversion.nn");
  std::ofstream out(path);
  out << "MAPNN v9 4 3 1\naffine 4 3\n";
  out.close();
  CHECK_THROWS_AS(load_model(path), UnsupportedVersionError);
}

TEST_CASE("model files: junk header raises a parse error") {
  const auto path = temp_file("junk.nn");
  std::ofstream out(path);
  out << "BOGUS v1 4 3 1\n";
  out.close();
  CHECK_THROWS_AS(load_model(path), ParseError);
}

TEST_CASE("sample files: round-trip preserves labels and values") {
  Rng rng(4);
  LabeledBatch batch = random_batch(rng, 10, 6, 4);
  const auto path = temp_file("samples.mapdata");
  save_samples(batch, 4, path);

  std::size_t classes = 0;
  const LabeledBatch back = load_samples(path, &classes);
  CHECK(classes == 4);
  CHECK(back.labels == batch.labels);
  CHECK(back.inputs == batch.inputs);
}

TEST_CASE("sample files: wrong value count raises a parse error") {
  const auto path = temp_file("badsamples.mapdata");
  std::ofstream out(path);
  out << "MAPDATA v1 1 3 4\n0 0.5 0.5\n";  // one value short
  out.close();
  CHECK_THROWS_AS(load_samples(path), ParseError);
}

TEST_CASE("perturbation files: round-trip and budget check") {
  Perturbation p;
  p.v = Tensor({4}, {0.05, -0.1, 1.0 / 7.0, 0.0});
  p.epsilon_inf = 0.25;
  p.target = 3;
  const auto path = temp_file("vec.mapvec");
  save_map(p, path);
  const Perturbation back = load_map(path);
  CHECK(back.v == p.v);
  CHECK(back.epsilon_inf == p.epsilon_inf);
  CHECK(back.target == p.target);

  std::ofstream out(path, std::ios::trunc);
  out << "MAPVEC v1 2 1 0.1\n0.5 0.0\n";  // exceeds the stated bound
  out.close();
  CHECK_THROWS_AS(load_map(path), DomainError);

  std::ofstream out2(path, std::ios::trunc);
  out2 << "MAPVEC v7 2 1 0.1\n0.0 0.0\n";
  out2.close();
  CHECK_THROWS_AS(load_map(path), UnsupportedVersionError);
}
