#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nnk/types.hpp"

namespace nnk {

/// Labelled feature vectors. Labels are remapped to dense ids in [0, C) at
/// load time; class_ids keeps the original value for each dense id so splits
/// loaded from different files can be aligned. Features are stored on disk as
/// f32 (both formats), so doubles that are not f32-representable quantise.
struct Dataset {
  Matrix features;                      // n x d
  std::vector<int> labels;              // dense ids
  std::vector<std::int64_t> class_ids;  // dense id -> original label

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int num_classes() const { return static_cast<int>(class_ids.size()); }
  void validate() const;
};

/// Build a dataset from raw features and labels (any non-negative values);
/// labels are remapped to dense ids sorted by original value.
Dataset make_dataset(Matrix features, const std::vector<std::int64_t>& raw_labels);

/// Load either format; the file is sniffed for the NNKF magic, otherwise
/// parsed as CSV with header "label,f0,...,f{d-1}". Malformed rows and
/// non-finite features are hard errors carrying the line number or offset.
Dataset load_dataset(const std::filesystem::path& path);

void save_csv(const Dataset& data, const std::filesystem::path& path);
void save_nnkf(const Dataset& data, const std::filesystem::path& path);

/// Remap `other`'s labels into `reference`'s dense id space (by original
/// class id). Throws if `other` contains a class the reference lacks.
std::vector<int> align_labels(const Dataset& reference, const Dataset& other);

/// Rows of `data` whose dense label is in `classes`, relabelled densely in
/// class id order. Used by the disjoint-class transfer protocol.
Dataset subset_by_class(const Dataset& data, const std::vector<int>& classes);

}  // namespace nnk
