#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nnk/ann.hpp"
#include "nnk/kernel.hpp"
#include "nnk/mlp.hpp"
#include "nnk/types.hpp"

namespace nnk {

struct UpdateSchedule {
  double update_interval = 10.0; // in epochs; fractional values refresh mid-epoch
  int k_train = 100;             // neighbours kept per training example

  void validate() const;
};

/// Per-training-example candidate neighbour lists. Deliberately stale between
/// refreshes: distant leftovers contribute ~0 kernel value, so they are
/// harmless, and re-searching every step would be intractable.
struct NeighbourTable {
  std::vector<std::vector<std::uint32_t>> rows;
  std::uint64_t bank_version = 0;
};

struct BankDiagnostics {
  double mean_distance = 0.0;     // example -> neighbour centre, Euclidean
  double mean_kernel_value = 0.0; // same pairs through the Gaussian kernel
};

/// k-NN lists for every centre against its own bank (self excluded when
/// self_exclude is set).
NeighbourTable build_neighbour_table(const CentreBank& bank, const CentreIndex& index,
                                     int k_train, bool self_exclude);

/// Mean distance and mean kernel value between each example and its current
/// neighbour list, the per-refresh training-curve diagnostics.
BankDiagnostics bank_diagnostics(const CentreBank& bank, const NeighbourTable& table,
                                 double sigma);

/// Owns the centre bank and its neighbour table across a training run.
/// refresh() recomputes every centre embedding with dropout disabled, carries
/// the learned per-centre weights over, rebuilds the ANN index and requeries
/// all neighbour lists. Between refreshes everything here is a frozen
/// snapshot; only the weights move (via mutable_weights).
class TrainingBank {
 public:
  TrainingBank(std::vector<int> labels, int num_classes, UpdateSchedule schedule,
               KernelConfig kernel, AnnOptions ann);

  void refresh(const MlpModel& model, const Matrix& train_features);

  bool refreshed() const { return refreshed_; }
  const CentreBank& bank() const;
  const NeighbourTable& table() const;

  /// The stale-but-valid list for a training example.
  std::span<const std::uint32_t> neighbours_for(std::size_t example) const;

  /// On-demand list for an example not in the bank (no self-exclusion).
  std::vector<std::uint32_t> query_neighbours(const ConstVectorRef& x, int k) const;

  BankDiagnostics diagnostics() const;

  Vector& mutable_weights();

  const UpdateSchedule& schedule() const { return schedule_; }

 private:
  std::vector<int> labels_;
  int num_classes_ = 0;
  UpdateSchedule schedule_;
  KernelConfig kernel_;
  AnnOptions ann_;
  CentreBank bank_;
  NeighbourTable table_;
  CentreIndex index_;
  bool refreshed_ = false;
};

}  // namespace nnk
