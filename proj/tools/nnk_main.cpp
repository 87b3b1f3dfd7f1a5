// nnk — train, tune and evaluate nearest-neighbour Gaussian kernel models.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nnk/ann.hpp"
#include "nnk/dataset.hpp"
#include "nnk/train.hpp"

namespace {

using namespace nnk;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open config file " + path.string());
  }
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return buffer.str();
}

// Flag values land here only when the user passed them; file values fill the
// rest. CLI flags always win over --config.
struct Overrides {
  std::optional<double> sigma, epsilon_floor, learning_rate, weight_decay, update_interval,
      embedding_dropout;
  std::optional<int> batch_size, epochs, k_train, max_degree, backtrack_budget, restarts,
      embedding_dim;
  std::optional<std::uint64_t> seed, exact_threshold;
  std::optional<bool> self_exclude, learn_kernel_weights, freeze_network, dropout_active;
  std::optional<std::vector<int>> hidden_dims, k_values;
  std::optional<std::string> loss;
};

void add_config_flags(CLI::App* cmd, std::string& config_path, Overrides& ov) {
  cmd->add_option("--config", config_path, "JSON config file; flags override its values");
  cmd->add_option("--sigma", ov.sigma, "Gaussian kernel width");
  cmd->add_option("--epsilon-floor", ov.epsilon_floor, "probability clamp");
  cmd->add_option("--learning-rate", ov.learning_rate, "SGD learning rate");
  cmd->add_option("--batch-size", ov.batch_size, "SGD batch size");
  cmd->add_option("--weight-decay", ov.weight_decay, "L2 weight decay");
  cmd->add_option("--epochs", ov.epochs, "training epochs");
  cmd->add_option("--seed", ov.seed, "root RNG seed");
  cmd->add_option("--update-interval", ov.update_interval, "centre refresh interval in epochs");
  cmd->add_option("--k-train", ov.k_train, "neighbours per example during training");
  cmd->add_option("--max-degree", ov.max_degree, "graph index out-degree");
  cmd->add_option("--backtrack-budget", ov.backtrack_budget, "search expansion budget");
  cmd->add_option("--restarts", ov.restarts, "extra search entry points");
  cmd->add_option("--exact-threshold", ov.exact_threshold,
                  "bank size up to which exact search is used");
  cmd->add_option("--hidden-dims", ov.hidden_dims, "hidden layer widths");
  cmd->add_option("--embedding-dim", ov.embedding_dim, "embedding dimension");
  cmd->add_option("--embedding-dropout", ov.embedding_dropout, "dropout on the embedding layer");
  cmd->add_option("--k-values", ov.k_values, "K values for Recall@K");
  cmd->add_option("--loss", ov.loss, "nnk or softmax")
      ->check(CLI::IsMember({"nnk", "softmax"}));
  cmd->add_flag("--self-exclude,!--no-self-exclude", ov.self_exclude,
                "exclude an example's own centre");
  cmd->add_flag("--learn-kernel-weights,!--no-learn-kernel-weights", ov.learn_kernel_weights,
                "learn per-centre weights");
  cmd->add_flag("--freeze-network,!--no-freeze-network", ov.freeze_network,
                "keep network parameters fixed");
  cmd->add_flag("--dropout,!--no-dropout", ov.dropout_active, "apply dropout during training");
}

RunConfig resolve_config(const std::string& config_path, const Overrides& ov) {
  RunConfig config;
  if (!config_path.empty()) {
    config = run_config_from_json_text(slurp(config_path));
  }
  if (ov.sigma) config.kernel.sigma = *ov.sigma;
  if (ov.epsilon_floor) config.kernel.epsilon_floor = *ov.epsilon_floor;
  if (ov.self_exclude) config.kernel.self_exclude = *ov.self_exclude;
  if (ov.learning_rate) config.train.learning_rate = *ov.learning_rate;
  if (ov.batch_size) config.train.batch_size = *ov.batch_size;
  if (ov.weight_decay) config.train.weight_decay = *ov.weight_decay;
  if (ov.epochs) config.train.epochs = *ov.epochs;
  if (ov.seed) config.train.seed = *ov.seed;
  if (ov.learn_kernel_weights) config.train.learn_kernel_weights = *ov.learn_kernel_weights;
  if (ov.freeze_network) config.train.freeze_network = *ov.freeze_network;
  if (ov.dropout_active) config.train.dropout_active = *ov.dropout_active;
  if (ov.update_interval) config.schedule.update_interval = *ov.update_interval;
  if (ov.k_train) config.schedule.k_train = *ov.k_train;
  if (ov.max_degree) config.ann.max_degree = *ov.max_degree;
  if (ov.backtrack_budget) config.ann.backtrack_budget = *ov.backtrack_budget;
  if (ov.restarts) config.ann.restarts = *ov.restarts;
  if (ov.exact_threshold) config.ann.exact_threshold = *ov.exact_threshold;
  if (ov.hidden_dims) config.hidden_dims = *ov.hidden_dims;
  if (ov.embedding_dim) config.embedding_dim = *ov.embedding_dim;
  if (ov.embedding_dropout) config.embedding_dropout = *ov.embedding_dropout;
  if (ov.k_values) config.metric_k_values = *ov.k_values;
  if (ov.loss) config.loss = *ov.loss == "softmax" ? LossKind::kSoftmax : LossKind::kNnk;
  config.validate();
  return config;
}

void emit_report(const EvalReport& report, const std::string& json_path) {
  std::cout << report_to_table(report);
  const std::string json = report_to_json(report);
  std::cout << json << "\n";
  if (!json_path.empty()) {
    std::ofstream os(json_path);
    if (!os) {
      throw std::runtime_error("cannot write report to " + json_path);
    }
    os << json << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nearest-neighbour Gaussian kernel metric learning"};
  app.require_subcommand(1);

  std::string config_path, train_path, val_path, data_path, out_path, checkpoint_path,
      json_path, mode = "classification";
  std::vector<double> sigma_grid;
  Overrides ov;

  auto* cmd_train = app.add_subcommand("train", "train a model and write a checkpoint");
  cmd_train->add_option("--train", train_path, "training split (CSV or NNKF)")->required();
  cmd_train->add_option("--val", val_path, "validation split")->required();
  cmd_train->add_option("--out", out_path, "checkpoint output path")->required();
  add_config_flags(cmd_train, config_path, ov);

  auto* cmd_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  cmd_eval->add_option("--checkpoint", checkpoint_path, "NNKC checkpoint")->required();
  cmd_eval->add_option("--data", data_path, "evaluation dataset")->required();
  cmd_eval->add_option("--mode", mode, "classification or transfer")
      ->check(CLI::IsMember({"classification", "transfer"}));
  cmd_eval->add_option("--json", json_path, "also write the JSON report here");

  auto* cmd_tune = app.add_subcommand("tune-sigma", "pick sigma by validation loss");
  cmd_tune->add_option("--train", train_path, "training split")->required();
  cmd_tune->add_option("--val", val_path, "validation split")->required();
  cmd_tune->add_option("--grid", sigma_grid, "candidate sigma values")->required();
  add_config_flags(cmd_tune, config_path, ov);

  auto* cmd_index = app.add_subcommand("index-build", "build and save a graph index");
  cmd_index->add_option("--data", data_path, "dataset whose features are indexed")->required();
  cmd_index->add_option("--out", out_path, "NNKG output path")->required();
  cmd_index->add_option("--checkpoint", checkpoint_path,
                        "embed features with this checkpoint first");
  add_config_flags(cmd_index, config_path, ov);

  auto* cmd_diag = app.add_subcommand("diagnose", "neighbourhood diagnostics of a checkpoint");
  cmd_diag->add_option("--checkpoint", checkpoint_path, "NNKC checkpoint")->required();

  auto* cmd_enroll = app.add_subcommand("enroll", "append new-class examples to the bank");
  cmd_enroll->add_option("--checkpoint", checkpoint_path, "NNKC checkpoint")->required();
  cmd_enroll->add_option("--data", data_path, "new-class examples")->required();
  cmd_enroll->add_option("--out", out_path, "updated checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_train) {
      const RunConfig config = resolve_config(config_path, ov);
      const Dataset train_data = load_dataset(train_path);
      const Dataset val_data = load_dataset(val_path);
      const TrainResult result = train(config, train_data, val_data, &std::cout);
      save_checkpoint(result.checkpoint, out_path);
      std::cout << "best epoch " << result.best_epoch << "  best val_loss "
                << result.best_val_loss << "\n";
      std::cout << "checkpoint written to " << out_path << "\n";
    } else if (*cmd_eval) {
      const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
      const Dataset data = load_dataset(data_path);
      const EvalMode eval_mode =
          mode == "transfer" ? EvalMode::kTransfer : EvalMode::kClassification;
      emit_report(evaluate(checkpoint, data, eval_mode), json_path);
    } else if (*cmd_tune) {
      const RunConfig config = resolve_config(config_path, ov);
      const Dataset train_data = load_dataset(train_path);
      const Dataset val_data = load_dataset(val_path);
      const double best = tune_sigma(config, train_data, val_data, sigma_grid, &std::cout);
      std::cout << "{\"sigma\": " << best << "}\n";
    } else if (*cmd_index) {
      const RunConfig config = resolve_config(config_path, ov);
      const Dataset data = load_dataset(data_path);
      Matrix points = data.features;
      if (!checkpoint_path.empty()) {
        points = embed(load_checkpoint(checkpoint_path), data.features);
      }
      const GraphIndex index = build_graph(points, config.ann.max_degree);
      save_index(index, out_path);
      std::cout << "index over " << index.node_count() << " points written to " << out_path
                << "\n";
    } else if (*cmd_diag) {
      const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
      const CentreIndex index(checkpoint.bank.centres, checkpoint.config.ann);
      const NeighbourTable table =
          build_neighbour_table(checkpoint.bank, index, checkpoint.config.schedule.k_train,
                                checkpoint.config.kernel.self_exclude);
      const BankDiagnostics diag =
          bank_diagnostics(checkpoint.bank, table, checkpoint.config.kernel.sigma);
      std::cout << "{\"mean_distance\": " << diag.mean_distance
                << ", \"mean_kernel_value\": " << diag.mean_kernel_value << "}\n";
    } else if (*cmd_enroll) {
      Checkpoint checkpoint = load_checkpoint(checkpoint_path);
      const Dataset data = load_dataset(data_path);
      const int before = checkpoint.bank.size();
      enroll(checkpoint, data);
      save_checkpoint(checkpoint, out_path);
      std::cout << "bank grew from " << before << " to " << checkpoint.bank.size()
                << " centres; checkpoint written to " << out_path << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2; // validation failure
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
