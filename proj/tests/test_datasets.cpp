#include "nzk/datasets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace nzk;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nzk_datasets_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

std::vector<unsigned char> idx_images(const std::vector<std::vector<unsigned char>>& imgs, std::uint32_t side) {
  std::vector<unsigned char> b;
  put_be32(b, 0x00000803);
  put_be32(b, static_cast<std::uint32_t>(imgs.size()));
  put_be32(b, side);
  put_be32(b, side);
  for (const auto& img : imgs) b.insert(b.end(), img.begin(), img.end());
  return b;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> b;
  put_be32(b, 0x00000801);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

void write_file(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t parse_error_position(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.position();
  } catch (const std::exception& e) {
    ADD_FAILURE() << "expected ParseError, got: " << e.what();
    return 0;
  }
  ADD_FAILURE() << "expected ParseError";
  return 0;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Datasets, TeacherTargetsAndSphere) {
  const Dataset ds = gen_teacher_student(2, 50, {vec2(7, 2), 0.0}, 3);
  ASSERT_EQ(ds.size(), 50u);
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    EXPECT_NEAR(ds.inputs.row(i).norm(), 1.0, 1e-12);
    EXPECT_NEAR(ds.targets[i], 7 * ds.inputs(i, 0) + 2 * ds.inputs(i, 1), 1e-12);
  }
  const Dataset zero = gen_teacher_student(5, 20, {Vec::Zero(5), 0.0}, 3);
  EXPECT_TRUE(zero.targets.isZero(0.0));
  EXPECT_EQ(ds.meta.at("source"), "teacher_student");
}

TEST(Datasets, TeacherNoiseHasRequestedSpread) {
  const std::size_t n = 20000;
  const Dataset clean = gen_teacher_student(2, n, {vec2(7, 2), 0.0}, 4);
  const Dataset noisy = gen_teacher_student(2, n, {vec2(7, 2), 0.02}, 4);
  EXPECT_EQ(clean.inputs, noisy.inputs);  // noise uses its own stream
  const Vec delta = noisy.targets - clean.targets;
  const double sd = std::sqrt(delta.squaredNorm() / static_cast<double>(n));
  // SE of a sample SD is about sigma / sqrt(2n).
  EXPECT_NEAR(sd, 0.02, 5.0 * 0.02 / std::sqrt(2.0 * n));
}

TEST(Datasets, TeacherTargetMeanIsZeroBySymmetry) {
  const std::size_t n = 10000;
  const Dataset ds = gen_teacher_student(2, n, {vec2(7, 2), 0.02}, 5);
  const double mean = ds.targets.mean();
  const double sd = std::sqrt((ds.targets.array() - mean).square().sum() / (n - 1.0));
  EXPECT_LE(std::abs(mean), 5.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST(Datasets, SphereAnglesAreUniform) {
  const std::size_t n = 100000, bins = 20;
  const Dataset ds = gen_teacher_student(2, n, {Vec::Zero(2), 0.0}, 6);
  std::vector<double> count(bins, 0.0);
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    const double a = std::atan2(ds.inputs(i, 1), ds.inputs(i, 0)) + std::numbers::pi;
    count[std::min(bins - 1, static_cast<std::size_t>(a / (2 * std::numbers::pi) * bins))] += 1.0;
  }
  const double p = 1.0 / bins, expect = n * p, se = std::sqrt(n * p * (1 - p));
  for (double c : count) EXPECT_LE(std::abs(c - expect), 5.0 * se);
}

TEST(Datasets, GenerationIsDeterministic) {
  const Dataset a = gen_teacher_student(10, 30, {vec2(1, -1), 0.1}, 9);
  const Dataset b = gen_teacher_student(10, 30, {vec2(1, -1), 0.1}, 9);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_NE(gen_teacher_student(10, 30, {vec2(1, -1), 0.1}, 10).inputs, a.inputs);
}

TEST(Datasets, TeacherValidation) {
  EXPECT_THROW(gen_teacher_student(1, 5, {Vec::Zero(1), 0.0}, 0), ConfigError);
  EXPECT_THROW(gen_teacher_student(2, 0, {Vec::Zero(2), 0.0}, 0), ConfigError);
  EXPECT_THROW(gen_teacher_student(2, 5, {Vec::Zero(3), 0.0}, 0), ConfigError);
}

TEST(Datasets, IdxFixture) {
  const fs::path dir = scratch_dir("idx");
  std::vector<unsigned char> blank(28 * 28, 0), full(28 * 28, 255), ramp(28 * 28);
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t c = 0; c < 28; ++c) ramp[r * 28 + c] = static_cast<unsigned char>(9 * c);
  write_file(dir / "img", idx_images({blank, full, ramp}, 28));
  write_file(dir / "lab", idx_labels({0, 1, 7}));

  const IdxData raw = parse_idx(detail::read_bytes(dir / "img"), detail::read_bytes(dir / "lab"));
  EXPECT_EQ(raw.count, 3u);
  EXPECT_EQ(raw.pixels[28 * 28 + 5], 255);
  EXPECT_EQ(raw.pixels[2 * 28 * 28 + 28 * 3 + 10], 90);
  EXPECT_EQ(raw.labels, (std::vector<unsigned char>{0, 1, 7}));

  const Dataset ds = load_mnist_idx((dir / "img").string(), (dir / "lab").string(), {0, 1}, 10);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 64u);
  EXPECT_EQ(ds.targets[0], -1.0);
  EXPECT_EQ(ds.targets[1], 1.0);
  EXPECT_TRUE(ds.inputs.row(0).isZero(0.0));
  EXPECT_LE((ds.inputs.row(1).array() - 1.0).abs().maxCoeff(), 1e-15);

  // Bilinear interpolation reproduces a linear field: output column c samples
  // source column (c + 0.5) * 28 / 8 - 0.5.
  const Dataset r = load_mnist_idx((dir / "img").string(), (dir / "lab").string(), {7}, 10);
  ASSERT_EQ(r.size(), 1u);
  for (int row = 0; row < 8; ++row)
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(r.inputs(0, row * 8 + c), 9.0 * ((c + 0.5) * 3.5 - 0.5) / 255.0, 1e-12);
  EXPECT_EQ(r.targets[0], 7.0);

  const Dataset again = load_mnist_idx((dir / "img").string(), (dir / "lab").string(), {0, 1}, 10);
  EXPECT_EQ(again.inputs, ds.inputs);
  const Dataset capped = load_mnist_idx((dir / "img").string(), (dir / "lab").string(), {0, 1, 7}, 1);
  EXPECT_EQ(capped.size(), 3u);
}

TEST(Datasets, IdxErrors) {
  const std::vector<unsigned char> img = idx_images({std::vector<unsigned char>(4, 1)}, 2);
  const std::vector<unsigned char> lab = idx_labels({3});
  std::vector<unsigned char> bad = img;
  bad[3] = 0x01;
  EXPECT_EQ(parse_error_position([&] { parse_idx(bad, lab); }), 0u);
  std::vector<unsigned char> badlab = lab;
  badlab[3] = 0x03;
  EXPECT_EQ(parse_error_position([&] { parse_idx(img, badlab); }), 0u);
  std::vector<unsigned char> cut(img.begin(), img.end() - 1);
  EXPECT_EQ(parse_error_position([&] { parse_idx(cut, lab); }), cut.size());
  EXPECT_EQ(parse_error_position([&] { parse_idx(img, idx_labels({3, 4})); }), 4u);
  std::vector<unsigned char> tiny(img.begin(), img.begin() + 6);
  EXPECT_EQ(parse_error_position([&] { parse_idx(tiny, lab); }), 6u);
  EXPECT_THROW(load_mnist_idx("/nonexistent/img", "/nonexistent/lab", {0, 1}, 5), ConfigError);
}

TEST(Datasets, BundledMnistSubset) {
  const std::string dir = NZK_TEST_DATA_DIR;
  const Dataset ds = load_mnist_idx(dir + "/mnist01-images-idx3-ubyte", dir + "/mnist01-labels-idx1-ubyte", {0, 1}, 100);
  EXPECT_EQ(ds.size(), 200u);
  EXPECT_EQ(ds.dim(), 64u);
  EXPECT_EQ((ds.targets.array() > 0).count(), 100);
  EXPECT_GE(ds.inputs.minCoeff(), 0.0);
  EXPECT_LE(ds.inputs.maxCoeff(), 1.0);
  EXPECT_GT(ds.inputs.maxCoeff(), 0.5);
}

TEST(Datasets, CsvRoundTrip) {
  const fs::path dir = scratch_dir("csv");
  const Dataset ds = gen_teacher_student(3, 7, {vec2(7, 2), 0.02}, 11);
  save_csv_dataset(ds, (dir / "a.csv").string());
  const Dataset back = load_csv_dataset((dir / "a.csv").string());
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.targets, ds.targets);
  save_csv_dataset(back, (dir / "b.csv").string());
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
  EXPECT_EQ(sa, sb);

  write_text(dir / "small.csv", "x_0,x_1,y\n1,2,3\n-0.5,4e-1,+2\n");
  const Dataset small = load_csv_dataset((dir / "small.csv").string());
  ASSERT_EQ(small.size(), 2u);
  EXPECT_EQ(small.inputs(1, 1), 0.4);
  EXPECT_EQ(small.targets[1], 2.0);
  EXPECT_EQ(small.meta.at("source"), (dir / "small.csv").string());
}

TEST(Datasets, CsvErrors) {
  const fs::path dir = scratch_dir("csv_err");
  auto pos = [&](const std::string& text) {
    write_text(dir / "f.csv", text);
    return parse_error_position([&] { load_csv_dataset((dir / "f.csv").string()); });
  };
  EXPECT_EQ(pos("x_0,x_1,y\n"), 1u);
  EXPECT_EQ(pos("x_0,x_1,y\n1,2,3\n1,2\n"), 3u);
  EXPECT_EQ(pos("x_0,x_1,y\n1,2,3\n4,abc,6\n"), 3u);
  EXPECT_EQ(pos("x_0,x_2,y\n1,2,3\n"), 1u);
  EXPECT_EQ(pos("x_0,x_1,target\n1,2,3\n"), 1u);
  EXPECT_EQ(pos(""), 1u);
  EXPECT_THROW(load_csv_dataset((dir / "missing.csv").string()), ConfigError);
}

TEST(Datasets, DataDirectoryResolution) {
  const fs::path dir = scratch_dir("root");
  write_text(dir / "rel.csv", "x_0,y\n1,2\n");
  ::setenv("NZK_DATA_DIR", dir.c_str(), 1);
  EXPECT_EQ(load_csv_dataset("rel.csv").size(), 1u);
  EXPECT_EQ(resolve_data_path("/abs/path"), fs::path("/abs/path"));
  ::unsetenv("NZK_DATA_DIR");
  EXPECT_EQ(resolve_data_path("rel.csv"), fs::path("rel.csv"));
}
