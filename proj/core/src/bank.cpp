#include "nnk/bank.hpp"

#include <cmath>
#include <stdexcept>

namespace nnk {

void UpdateSchedule::validate() const {
  if (!(update_interval > 0.0)) {
    throw std::invalid_argument("UpdateSchedule: update_interval must be positive");
  }
  if (k_train < 1) {
    throw std::invalid_argument("UpdateSchedule: k_train must be >= 1");
  }
}

TrainingBank::TrainingBank(std::vector<int> labels, int num_classes, UpdateSchedule schedule,
                           KernelConfig kernel, AnnOptions ann)
    : labels_(std::move(labels)),
      num_classes_(num_classes),
      schedule_(schedule),
      kernel_(kernel),
      ann_(ann) {
  schedule_.validate();
  kernel_.validate();
  if (labels_.size() < 2) {
    throw std::invalid_argument("TrainingBank: need at least 2 training examples");
  }
}

NeighbourTable build_neighbour_table(const CentreBank& bank, const CentreIndex& index,
                                     int k_train, bool self_exclude) {
  const int m = bank.size();
  const int k = std::min(k_train, m - 1);
  NeighbourTable table;
  table.rows.assign(m, {});
  for (int i = 0; i < m; ++i) {
    std::optional<std::uint32_t> exclude;
    if (self_exclude) exclude = static_cast<std::uint32_t>(i);
    const auto found = index.knn(bank.centres.row(i).transpose(), k, exclude);
    auto& row = table.rows[i];
    row.reserve(found.size());
    for (const auto& [id, dist] : found) row.push_back(id);
  }
  table.bank_version = bank.version;
  return table;
}

BankDiagnostics bank_diagnostics(const CentreBank& bank, const NeighbourTable& table,
                                 double sigma) {
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  double dist_sum = 0.0;
  double kernel_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::uint32_t j : table.rows[i]) {
      const double sq = (bank.centres.row(i) - bank.centres.row(j)).squaredNorm();
      dist_sum += std::sqrt(sq);
      kernel_sum += std::exp(-sq * inv_two_sigma_sq);
      ++pairs;
    }
  }
  BankDiagnostics diag;
  if (pairs > 0) {
    diag.mean_distance = dist_sum / pairs;
    diag.mean_kernel_value = kernel_sum / pairs;
  }
  return diag;
}

void TrainingBank::refresh(const MlpModel& model, const Matrix& train_features) {
  if (train_features.rows() != static_cast<Eigen::Index>(labels_.size())) {
    throw std::invalid_argument("TrainingBank::refresh: feature rows do not match labels");
  }
  if (train_features.cols() != model.input_dim()) {
    throw std::invalid_argument("TrainingBank::refresh: feature dim does not match model");
  }

  // Centres are computed dropout-free so their scale matches inference.
  std::mt19937_64 unused_rng(0);
  bank_.centres = forward(model, train_features, /*dropout_active=*/false, unused_rng);
  bank_.labels = labels_;
  bank_.num_classes = num_classes_;
  if (bank_.weights.size() != train_features.rows()) {
    bank_.weights = Vector::Ones(train_features.rows()); // first refresh only
  }
  ++bank_.version;
  bank_.validate();

  index_ = CentreIndex(bank_.centres, ann_);
  table_ = build_neighbour_table(bank_, index_, schedule_.k_train, kernel_.self_exclude);
  refreshed_ = true;
}

const CentreBank& TrainingBank::bank() const {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  return bank_;
}

const NeighbourTable& TrainingBank::table() const {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  return table_;
}

std::span<const std::uint32_t> TrainingBank::neighbours_for(std::size_t example) const {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  if (example >= table_.rows.size()) {
    throw std::invalid_argument("TrainingBank::neighbours_for: unknown example id");
  }
  return table_.rows[example];
}

std::vector<std::uint32_t> TrainingBank::query_neighbours(const ConstVectorRef& x, int k) const {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  const auto found = index_.knn(x, std::min(k, bank_.size()));
  std::vector<std::uint32_t> ids;
  ids.reserve(found.size());
  for (const auto& [id, dist] : found) ids.push_back(id);
  return ids;
}

BankDiagnostics TrainingBank::diagnostics() const {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  return bank_diagnostics(bank_, table_, kernel_.sigma);
}

Vector& TrainingBank::mutable_weights() {
  if (!refreshed_) throw std::logic_error("TrainingBank: not refreshed yet");
  return bank_.weights;
}

}  // namespace nnk
