#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nnk/bank.hpp"
#include "nnk/dataset.hpp"
#include "nnk/kernel.hpp"
#include "nnk/mlp.hpp"
#include "nnk/types.hpp"

namespace nnk {

enum class LossKind { kNnk, kSoftmax };

/// Everything a run needs, assembled from a JSON document and/or CLI flags.
struct RunConfig {
  KernelConfig kernel;
  TrainConfig train;
  UpdateSchedule schedule;
  AnnOptions ann;
  std::vector<int> hidden_dims = {64};
  int embedding_dim = 16;
  double embedding_dropout = 0.0;
  std::vector<int> metric_k_values = {1, 2, 4, 8};
  LossKind loss = LossKind::kNnk;

  void validate() const;
};

/// Strict parse: unknown keys and wrong types are hard errors.
RunConfig run_config_from_json_text(const std::string& json_text);
std::string run_config_to_json_text(const RunConfig& config);

struct Checkpoint {
  RunConfig config;
  std::vector<std::int64_t> class_ids; // bank dense label -> original class id
  MlpModel model;
  CentreBank bank;
};

struct EpochLog {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<BankDiagnostics> refreshes;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

/// The training loop: initial refresh, then per epoch a seeded shuffle and
/// per batch forward / stale-neighbour loss / backward / SGD, with the bank
/// refreshed whenever epoch time crosses a multiple of the update interval.
/// The checkpoint holds the best-validation-loss model with a bank refreshed
/// from it. Non-finite loss aborts with a diagnostic.
TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  std::ostream* log = nullptr);

/// Validation loss of each candidate sigma against the frozen initial
/// embeddings; returns the argmin, ties to the smaller value. Duplicate grid
/// entries are ignored.
double tune_sigma(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const std::vector<double>& grid, std::ostream* log = nullptr);

enum class EvalMode { kClassification, kTransfer };

struct EvalReport {
  std::optional<double> accuracy;
  std::optional<double> nmi_score;
  std::map<int, double> recall;
};

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

/// Classification mode: kernel-classifier accuracy (or head argmax for the
/// softmax baseline) against the checkpoint's bank. Transfer mode: NMI and
/// Recall@K over embeddings of withheld classes; the test classes must be
/// disjoint from the classes the checkpoint was trained on.
EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, EvalMode mode);

/// Embed new examples with the frozen network and append them to the bank
/// with weight 1. No network update takes place; unseen class ids extend the
/// checkpoint's class table.
void enroll(Checkpoint& checkpoint, const Dataset& new_data);

// NNKC checkpoint persistence.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Embeddings of `features` under the checkpoint's embedding network
/// (dropout disabled; the softmax head, when present, is not applied).
Matrix embed(const Checkpoint& checkpoint, const Matrix& features);

}  // namespace nnk
