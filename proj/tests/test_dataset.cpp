#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nnk/dataset.hpp"
#include "support/synthetic.hpp"

using namespace nnk;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

}  // namespace

TEST_CASE("CSV loading") {
  SUBCASE("three-row file with two features") {
    const auto path = temp_file("nnk_ds_ok.csv");
    write_text(path, "label,f0,f1\n7,0.5,-1.25\n3,1,2\n7,0,0.125\n");
    const Dataset data = load_dataset(path);
    CHECK(data.size() == 3);
    CHECK(data.dim() == 2);
    CHECK(data.num_classes() == 2);
    // dense ids sorted by original label: 3 -> 0, 7 -> 1
    CHECK(data.class_ids == std::vector<std::int64_t>{3, 7});
    CHECK(data.labels == std::vector<int>{1, 0, 1});
    CHECK(data.features(0, 1) == -1.25);
    std::filesystem::remove(path);
  }

  SUBCASE("bad header is rejected") {
    const auto path = temp_file("nnk_ds_hdr.csv");
    write_text(path, "label,x0,x1\n1,0,0\n");
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("header"), std::runtime_error);
    std::filesystem::remove(path);
  }

  SUBCASE("malformed row reports the line number") {
    const auto path = temp_file("nnk_ds_row.csv");
    write_text(path, "label,f0\n1,0.5\n2,oops\n");
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":3"), std::runtime_error);
    std::filesystem::remove(path);
  }

  SUBCASE("wrong column count reports the line number") {
    const auto path = temp_file("nnk_ds_cols.csv");
    write_text(path, "label,f0,f1\n1,0.5,1.0\n2,0.5\n");
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":3"), std::runtime_error);
    std::filesystem::remove(path);
  }

  SUBCASE("non-finite feature is rejected") {
    const auto path = temp_file("nnk_ds_inf.csv");
    write_text(path, "label,f0\n1,inf\n");
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
    std::filesystem::remove(path);
  }

  SUBCASE("missing file is a hard error") {
    CHECK_THROWS_AS(load_dataset(temp_file("nnk_ds_missing.csv")), std::runtime_error);
  }
}

TEST_CASE("NNKF round-trip is bit-identical") {
  const Dataset data = synth::blobs(4, 6, 5, 2.0, 0.7, 51);
  const auto path = temp_file("nnk_ds_rt.nnkf");
  save_nnkf(data, path);
  const Dataset loaded = load_dataset(path);
  CHECK(loaded.size() == data.size());
  CHECK(loaded.dim() == data.dim());
  CHECK(loaded.labels == data.labels);
  CHECK(loaded.class_ids == data.class_ids);
  CHECK((loaded.features - data.features).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);

  SUBCASE("truncated file reports the offset") {
    const auto bad = temp_file("nnk_ds_trunc.nnkf");
    save_nnkf(data, bad);
    std::filesystem::resize_file(bad, 40);
    CHECK_THROWS_WITH_AS(load_dataset(bad), doctest::Contains("offset"), std::runtime_error);
    std::filesystem::remove(bad);
  }
}

TEST_CASE("CSV and NNKF encodings load to equal datasets") {
  const Dataset data = synth::blobs(3, 5, 4, 1.5, 0.4, 53);
  const auto csv_path = temp_file("nnk_ds_eq.csv");
  const auto bin_path = temp_file("nnk_ds_eq.nnkf");
  save_csv(data, csv_path);
  save_nnkf(data, bin_path);
  const Dataset from_csv = load_dataset(csv_path);
  const Dataset from_bin = load_dataset(bin_path);
  CHECK(from_csv.labels == from_bin.labels);
  CHECK(from_csv.class_ids == from_bin.class_ids);
  CHECK((from_csv.features - from_bin.features).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(csv_path);
  std::filesystem::remove(bin_path);
}

TEST_CASE("label alignment across splits") {
  Matrix f1(3, 2);
  f1 << 0, 0, 1, 1, 2, 2;
  const Dataset reference = make_dataset(f1, {10, 30, 20});
  Matrix f2(2, 2);
  f2 << 5, 5, 6, 6;
  const Dataset other = make_dataset(f2, {20, 10});

  const auto aligned = align_labels(reference, other);
  CHECK(aligned == std::vector<int>{1, 0}); // 20 -> dense 1, 10 -> dense 0

  const Dataset unknown = make_dataset(f2, {20, 99});
  CHECK_THROWS_AS(align_labels(reference, unknown), std::invalid_argument);
}

TEST_CASE("subset_by_class keeps rows and densifies labels") {
  const Dataset data = synth::blobs(5, 4, 3, 1.0, 0.3, 57);
  const Dataset subset = subset_by_class(data, {1, 3});
  CHECK(subset.size() == 8);
  CHECK(subset.num_classes() == 2);
  CHECK(subset.class_ids == std::vector<std::int64_t>{1, 3});
  CHECK_THROWS_AS(subset_by_class(data, {9}), std::invalid_argument);
}
