#include "nnk/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "nnk/metrics.hpp"
#include "nnk/rng.hpp"
#include "nnk/serialize.hpp"

namespace nnk {

using nlohmann::json;

void RunConfig::validate() const {
  kernel.validate();
  train.validate();
  schedule.validate();
  if (ann.max_degree < 1 || ann.backtrack_budget < 1 || ann.restarts < 0) {
    throw std::invalid_argument("RunConfig: bad ann parameters");
  }
  if (embedding_dim < 1) {
    throw std::invalid_argument("RunConfig: embedding_dim must be >= 1");
  }
  if (embedding_dropout < 0.0 || embedding_dropout >= 1.0) {
    throw std::invalid_argument("RunConfig: embedding_dropout outside [0, 1)");
  }
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("RunConfig: hidden layer width must be >= 1");
  }
  if (metric_k_values.empty()) {
    throw std::invalid_argument("RunConfig: k_values must not be empty");
  }
  for (int k : metric_k_values) {
    if (k < 1) throw std::invalid_argument("RunConfig: k_values entries must be >= 1");
  }
}

namespace {

template <typename T>
T get_number(const json& v, const char* key) {
  if (!v.is_number()) {
    throw std::invalid_argument(std::string("config key '") + key + "' must be a number");
  }
  return v.get<T>();
}

bool get_bool(const json& v, const char* key) {
  if (!v.is_boolean()) {
    throw std::invalid_argument(std::string("config key '") + key + "' must be a boolean");
  }
  return v.get<bool>();
}

std::vector<int> get_int_array(const json& v, const char* key) {
  if (!v.is_array()) {
    throw std::invalid_argument(std::string("config key '") + key + "' must be an array");
  }
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) {
      throw std::invalid_argument(std::string("config key '") + key + "' must hold integers");
    }
    out.push_back(e.get<int>());
  }
  return out;
}

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw std::invalid_argument("config: top-level JSON value must be an object");
  }
  RunConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "sigma") c.kernel.sigma = get_number<double>(value, "sigma");
    else if (key == "epsilon_floor") c.kernel.epsilon_floor = get_number<double>(value, "epsilon_floor");
    else if (key == "self_exclude") c.kernel.self_exclude = get_bool(value, "self_exclude");
    else if (key == "learning_rate") c.train.learning_rate = get_number<double>(value, "learning_rate");
    else if (key == "batch_size") c.train.batch_size = get_number<int>(value, "batch_size");
    else if (key == "weight_decay") c.train.weight_decay = get_number<double>(value, "weight_decay");
    else if (key == "epochs") c.train.epochs = get_number<int>(value, "epochs");
    else if (key == "seed") c.train.seed = get_number<std::uint64_t>(value, "seed");
    else if (key == "learn_kernel_weights") c.train.learn_kernel_weights = get_bool(value, "learn_kernel_weights");
    else if (key == "freeze_network") c.train.freeze_network = get_bool(value, "freeze_network");
    else if (key == "dropout_active") c.train.dropout_active = get_bool(value, "dropout_active");
    else if (key == "update_interval") c.schedule.update_interval = get_number<double>(value, "update_interval");
    else if (key == "k_train") c.schedule.k_train = get_number<int>(value, "k_train");
    else if (key == "max_degree") c.ann.max_degree = get_number<int>(value, "max_degree");
    else if (key == "backtrack_budget") c.ann.backtrack_budget = get_number<int>(value, "backtrack_budget");
    else if (key == "restarts") c.ann.restarts = get_number<int>(value, "restarts");
    else if (key == "exact_threshold") c.ann.exact_threshold = get_number<std::size_t>(value, "exact_threshold");
    else if (key == "hidden_dims") c.hidden_dims = get_int_array(value, "hidden_dims");
    else if (key == "embedding_dim") c.embedding_dim = get_number<int>(value, "embedding_dim");
    else if (key == "embedding_dropout") c.embedding_dropout = get_number<double>(value, "embedding_dropout");
    else if (key == "k_values") c.metric_k_values = get_int_array(value, "k_values");
    else if (key == "loss") {
      if (!value.is_string() || (value != "nnk" && value != "softmax")) {
        throw std::invalid_argument("config key 'loss' must be \"nnk\" or \"softmax\"");
      }
      c.loss = value == "nnk" ? LossKind::kNnk : LossKind::kSoftmax;
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json doc;
  doc["sigma"] = c.kernel.sigma;
  doc["epsilon_floor"] = c.kernel.epsilon_floor;
  doc["self_exclude"] = c.kernel.self_exclude;
  doc["learning_rate"] = c.train.learning_rate;
  doc["batch_size"] = c.train.batch_size;
  doc["weight_decay"] = c.train.weight_decay;
  doc["epochs"] = c.train.epochs;
  doc["seed"] = c.train.seed;
  doc["learn_kernel_weights"] = c.train.learn_kernel_weights;
  doc["freeze_network"] = c.train.freeze_network;
  doc["dropout_active"] = c.train.dropout_active;
  doc["update_interval"] = c.schedule.update_interval;
  doc["k_train"] = c.schedule.k_train;
  doc["max_degree"] = c.ann.max_degree;
  doc["backtrack_budget"] = c.ann.backtrack_budget;
  doc["restarts"] = c.ann.restarts;
  doc["exact_threshold"] = c.ann.exact_threshold;
  doc["hidden_dims"] = c.hidden_dims;
  doc["embedding_dim"] = c.embedding_dim;
  doc["embedding_dropout"] = c.embedding_dropout;
  doc["k_values"] = c.metric_k_values;
  doc["loss"] = c.loss == LossKind::kNnk ? "nnk" : "softmax";
  return doc;
}

std::vector<int> checkpoint_dense_map(const Checkpoint& checkpoint, const Dataset& data,
                                      const char* caller) {
  std::unordered_map<std::int64_t, int> dense;
  for (std::size_t id = 0; id < checkpoint.class_ids.size(); ++id) {
    dense[checkpoint.class_ids[id]] = static_cast<int>(id);
  }
  std::vector<int> mapped;
  mapped.reserve(data.labels.size());
  for (int label : data.labels) {
    const auto it = dense.find(data.class_ids[label]);
    if (it == dense.end()) {
      throw std::invalid_argument(std::string(caller) + ": class " +
                                  std::to_string(data.class_ids[label]) +
                                  " unknown to the checkpoint");
    }
    mapped.push_back(it->second);
  }
  return mapped;
}

MlpModel embedding_part(const MlpModel& model, LossKind loss) {
  if (loss == LossKind::kNnk) return model;
  MlpModel stripped = model;
  stripped.layers.pop_back(); // drop the softmax head
  return stripped;
}

Matrix embed_features(const MlpModel& model, LossKind loss, const Matrix& features) {
  std::mt19937_64 unused(0);
  const MlpModel net = embedding_part(model, loss);
  return forward(net, features, /*dropout_active=*/false, unused);
}

double validation_loss_nnk(const MlpModel& model, const TrainingBank& bank,
                           const Matrix& val_features, const std::vector<int>& val_labels,
                           const KernelConfig& kernel, int k_train) {
  std::mt19937_64 unused(0);
  const Matrix emb = forward(model, val_features, false, unused);
  double total = 0.0;
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    const auto neighbours = bank.query_neighbours(emb.row(r).transpose(), k_train);
    total += nnk_loss(emb.row(r).transpose(), val_labels[r], bank.bank(), neighbours, kernel);
  }
  return total / static_cast<double>(emb.rows());
}

TrainResult train_nnk(const RunConfig& config, const Dataset& train_data,
                      const std::vector<int>& val_labels, const Dataset& val_data,
                      std::ostream* log) {
  const int n = train_data.size();
  const int batch_size = std::min(config.train.batch_size, n);
  const int batches = (n + batch_size - 1) / batch_size;

  MlpModel model = make_mlp(train_data.dim(), config.hidden_dims, config.embedding_dim,
                            config.embedding_dropout, config.train.seed);
  TrainingBank bank(train_data.labels, train_data.num_classes(), config.schedule,
                    config.kernel, config.ann);

  auto shuffle_rng = make_rng(config.train.seed, "shuffle");
  auto dropout_rng = make_rng(config.train.seed, "dropout");

  TrainResult result;
  double next_refresh = 0.0;
  const auto refresh_if_due = [&](double epoch_time) {
    if (epoch_time + 1e-9 < next_refresh) return;
    bank.refresh(model, train_data.features);
    const BankDiagnostics diag = bank.diagnostics();
    result.refreshes.push_back(diag);
    if (log) {
      *log << "refresh " << bank.bank().version << "  mean_distance " << diag.mean_distance
           << "  mean_kernel " << diag.mean_kernel_value << "\n";
    }
    while (next_refresh <= epoch_time + 1e-9) next_refresh += config.schedule.update_interval;
  };

  refresh_if_due(0.0); // valid centres before the first gradient step

  MlpModel best_model = model;
  Vector best_weights = bank.bank().weights;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<int> indices(n);
  std::iota(indices.begin(), indices.end(), 0);

  // Deterministic end-of-epoch objective: the stale-neighbour loss of every
  // training example against the current bank, dropout disabled.
  const auto train_objective = [&]() {
    std::mt19937_64 unused(0);
    const Matrix emb = forward(model, train_data.features, false, unused);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += nnk_loss(emb.row(i).transpose(), train_data.labels[i], bank.bank(),
                        bank.neighbours_for(i), config.kernel);
    }
    return total / n;
  };

  const int emb_dim = config.embedding_dim;
  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(indices.begin(), indices.end(), shuffle_rng);

    for (int b = 0; b < batches; ++b) {
      refresh_if_due(epoch + static_cast<double>(b) / batches);

      const int begin = b * batch_size;
      const int rows = std::min(batch_size, n - begin);
      Matrix batch(rows, train_data.dim());
      for (int r = 0; r < rows; ++r) batch.row(r) = train_data.features.row(indices[begin + r]);

      ForwardCache cache;
      const Matrix emb = forward(model, batch, config.train.dropout_active, dropout_rng, &cache);

      Matrix d_emb = Matrix::Zero(rows, emb_dim);
      std::unordered_map<int, double> weight_grads;
      double batch_loss = 0.0;
      for (int r = 0; r < rows; ++r) {
        const int gi = indices[begin + r];
        const auto neighbours = bank.neighbours_for(gi);
        auto [loss, grads] = nnk_loss_backward(emb.row(r).transpose(), train_data.labels[gi],
                                               bank.bank(), neighbours, config.kernel);
        batch_loss += loss;
        d_emb.row(r) = grads.d_embedding.transpose() / rows;
        if (config.train.learn_kernel_weights && !grads.clamped) {
          for (const auto& [id, g] : grads.d_weights) weight_grads[id] += g / rows;
        }
      }
      batch_loss /= rows;
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b));
      }

      const ParamGrads grads = backward(model, cache, d_emb);
      std::vector<std::pair<int, double>> wg(weight_grads.begin(), weight_grads.end());
      sgd_step(model, &bank.mutable_weights(), grads, wg, config.train);
    }

    EpochLog entry;
    entry.train_loss = train_objective();
    entry.val_loss = validation_loss_nnk(model, bank, val_data.features, val_labels,
                                         config.kernel, config.schedule.k_train);
    result.epochs.push_back(entry);
    if (log) {
      *log << "epoch " << epoch << "  train_loss " << entry.train_loss << "  val_loss "
           << entry.val_loss << "\n";
    }
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      best_model = model;
      best_weights = bank.bank().weights;
    }
  }

  // The emitted bank is refreshed from the best model so deployed centres
  // match the deployed network.
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.class_ids = train_data.class_ids;
  ck.model = best_model;
  std::mt19937_64 unused(0);
  ck.bank.centres = forward(best_model, train_data.features, false, unused);
  ck.bank.labels = train_data.labels;
  ck.bank.weights = best_weights;
  ck.bank.num_classes = train_data.num_classes();
  ck.bank.version = bank.bank().version + 1;
  ck.bank.validate();
  return result;
}

TrainResult train_softmax(const RunConfig& config, const Dataset& train_data,
                          const std::vector<int>& val_labels, const Dataset& val_data,
                          std::ostream* log) {
  const int n = train_data.size();
  const int batch_size = std::min(config.train.batch_size, n);
  const int batches = (n + batch_size - 1) / batch_size;

  const MlpModel base = make_mlp(train_data.dim(), config.hidden_dims, config.embedding_dim,
                                 config.embedding_dropout, config.train.seed);
  MlpModel model = with_softmax_head(base, train_data.num_classes(), config.train.seed);

  auto shuffle_rng = make_rng(config.train.seed, "shuffle");
  auto dropout_rng = make_rng(config.train.seed, "dropout");

  TrainResult result;
  MlpModel best_model = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<int> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  std::mt19937_64 unused(0);

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(indices.begin(), indices.end(), shuffle_rng);
    for (int b = 0; b < batches; ++b) {
      const int begin = b * batch_size;
      const int rows = std::min(batch_size, n - begin);
      Matrix batch(rows, train_data.dim());
      std::vector<int> batch_labels(rows);
      for (int r = 0; r < rows; ++r) {
        batch.row(r) = train_data.features.row(indices[begin + r]);
        batch_labels[r] = train_data.labels[indices[begin + r]];
      }
      auto [loss, grads] =
          softmax_head_loss(model, batch, batch_labels, config.train.dropout_active, dropout_rng);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      sgd_step(model, nullptr, grads, {}, config.train);
    }

    EpochLog entry;
    const Matrix train_logits = forward(model, train_data.features, false, unused);
    entry.train_loss = softmax_cross_entropy(train_logits, train_data.labels).first;
    const Matrix val_logits = forward(model, val_data.features, false, unused);
    entry.val_loss = softmax_cross_entropy(val_logits, val_labels).first;
    result.epochs.push_back(entry);
    if (log) {
      *log << "epoch " << epoch << "  train_loss " << entry.train_loss << "  val_loss "
           << entry.val_loss << "\n";
    }
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      best_model = model;
    }
  }

  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.class_ids = train_data.class_ids;
  ck.model = best_model;
  ck.bank.centres = embed_features(best_model, LossKind::kSoftmax, train_data.features);
  ck.bank.labels = train_data.labels;
  ck.bank.weights = Vector::Ones(n);
  ck.bank.num_classes = train_data.num_classes();
  ck.bank.version = 1;
  ck.bank.validate();
  return result;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::string run_config_to_json_text(const RunConfig& config) {
  return config_to_json(config).dump();
}

TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  std::ostream* log) {
  config.validate();
  train_data.validate();
  val_data.validate();
  if (train_data.size() < 2) {
    throw std::invalid_argument("train: training split is empty or trivial");
  }
  if (val_data.dim() != train_data.dim()) {
    throw std::invalid_argument("train: validation feature dimension differs from training");
  }
  const std::vector<int> val_labels = align_labels(train_data, val_data);
  if (config.loss == LossKind::kSoftmax) {
    return train_softmax(config, train_data, val_labels, val_data, log);
  }
  return train_nnk(config, train_data, val_labels, val_data, log);
}

double tune_sigma(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const std::vector<double>& grid, std::ostream* log) {
  config.validate();
  if (grid.empty()) {
    throw std::invalid_argument("tune_sigma: empty grid");
  }
  std::set<double> unique_grid(grid.begin(), grid.end());
  for (double sigma : unique_grid) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("tune_sigma: grid values must be positive and finite");
    }
  }
  const std::vector<int> val_labels = align_labels(train_data, val_data);

  const MlpModel model = make_mlp(train_data.dim(), config.hidden_dims, config.embedding_dim,
                                  config.embedding_dropout, config.train.seed);
  TrainingBank bank(train_data.labels, train_data.num_classes(), config.schedule,
                    config.kernel, config.ann);
  bank.refresh(model, train_data.features);

  // Neighbour lists are distance-ranked, hence sigma-independent: fetch once.
  std::mt19937_64 unused(0);
  const Matrix emb = forward(model, val_data.features, false, unused);
  std::vector<std::vector<std::uint32_t>> neighbour_lists(emb.rows());
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    neighbour_lists[r] = bank.query_neighbours(emb.row(r).transpose(), config.schedule.k_train);
  }

  double best_sigma = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double sigma : unique_grid) { // ascending: ties keep the smaller sigma
    KernelConfig kernel = config.kernel;
    kernel.sigma = sigma;
    double total = 0.0;
    for (Eigen::Index r = 0; r < emb.rows(); ++r) {
      total += nnk_loss(emb.row(r).transpose(), val_labels[r], bank.bank(), neighbour_lists[r],
                        kernel);
    }
    const double mean = total / static_cast<double>(emb.rows());
    if (log) {
      *log << "sigma " << sigma << "  val_loss " << mean << "\n";
    }
    if (mean < best_loss) {
      best_loss = mean;
      best_sigma = sigma;
    }
  }
  return best_sigma;
}

std::string report_to_json(const EvalReport& report) {
  json doc;
  if (report.accuracy) {
    doc["accuracy"] = *report.accuracy;
  }
  if (report.nmi_score) {
    doc["nmi"] = *report.nmi_score;
    json recall = json::object();
    for (const auto& [k, v] : report.recall) recall[std::to_string(k)] = v;
    doc["recall"] = recall;
  }
  return doc.dump();
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream os;
  os << "metric      value\n";
  char buf[64];
  if (report.accuracy) {
    std::snprintf(buf, sizeof(buf), "%-10s  %.4f\n", "accuracy", *report.accuracy);
    os << buf;
  }
  for (const auto& [k, v] : report.recall) {
    std::snprintf(buf, sizeof(buf), "R@%-8d  %.4f\n", k, v);
    os << buf;
  }
  if (report.nmi_score) {
    std::snprintf(buf, sizeof(buf), "%-10s  %.4f\n", "NMI", *report.nmi_score);
    os << buf;
  }
  return os.str();
}

EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, EvalMode mode) {
  data.validate();
  checkpoint.bank.validate();
  EvalReport report;

  if (mode == EvalMode::kClassification) {
    const std::vector<int> labels = checkpoint_dense_map(checkpoint, data, "evaluate");
    int correct = 0;
    if (checkpoint.config.loss == LossKind::kSoftmax) {
      std::mt19937_64 unused(0);
      const Matrix logits = forward(checkpoint.model, data.features, false, unused);
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < logits.cols(); ++c) {
          if (logits(r, c) > logits(r, best)) best = c;
        }
        if (best == labels[r]) ++correct;
      }
    } else {
      const Matrix emb = embed(checkpoint, data.features);
      const CentreIndex index(checkpoint.bank.centres, checkpoint.config.ann);
      const int k = std::min(checkpoint.config.schedule.k_train, checkpoint.bank.size());
      for (Eigen::Index r = 0; r < emb.rows(); ++r) {
        const auto found = index.knn(emb.row(r).transpose(), k);
        std::vector<std::uint32_t> neighbours;
        neighbours.reserve(found.size());
        for (const auto& [id, dist] : found) neighbours.push_back(id);
        const ClassDistribution dist =
            classify(emb.row(r).transpose(), checkpoint.bank, neighbours, checkpoint.config.kernel);
        if (dist.argmax() == labels[r]) ++correct;
      }
    }
    report.accuracy = static_cast<double>(correct) / data.size();
    return report;
  }

  // Transfer protocol: evaluation classes must be disjoint from training ones.
  for (std::int64_t cls : data.class_ids) {
    if (std::find(checkpoint.class_ids.begin(), checkpoint.class_ids.end(), cls) !=
        checkpoint.class_ids.end()) {
      throw std::invalid_argument("evaluate: transfer mode requires disjoint class sets (class " +
                                  std::to_string(cls) + " was trained on)");
    }
  }
  const Matrix emb = embed(checkpoint, data.features);
  const ClusterAssignment clusters =
      kmeans_best_of(emb, data.num_classes(), checkpoint.config.train.seed, 10);
  report.nmi_score = nmi(clusters.assignments, data.labels);
  report.recall = recall_at_k(emb, data.labels, checkpoint.config.metric_k_values);
  return report;
}

void enroll(Checkpoint& checkpoint, const Dataset& new_data) {
  new_data.validate();
  if (new_data.dim() != checkpoint.model.input_dim()) {
    throw std::invalid_argument("enroll: feature dimension does not match the checkpoint");
  }
  const Matrix emb = embed(checkpoint, new_data.features);

  std::unordered_map<std::int64_t, int> dense;
  for (std::size_t id = 0; id < checkpoint.class_ids.size(); ++id) {
    dense[checkpoint.class_ids[id]] = static_cast<int>(id);
  }

  CentreBank& bank = checkpoint.bank;
  const int old_m = bank.size();
  bank.centres.conservativeResize(old_m + emb.rows(), Eigen::NoChange);
  bank.centres.bottomRows(emb.rows()) = emb;
  bank.weights.conservativeResize(old_m + emb.rows());
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    const std::int64_t raw = new_data.class_ids[new_data.labels[r]];
    auto it = dense.find(raw);
    if (it == dense.end()) {
      it = dense.emplace(raw, static_cast<int>(checkpoint.class_ids.size())).first;
      checkpoint.class_ids.push_back(raw);
    }
    bank.labels.push_back(it->second);
    bank.weights[old_m + r] = 1.0; // enrolled centres start at unit weight
  }
  bank.num_classes = static_cast<int>(checkpoint.class_ids.size());
  ++bank.version;
  bank.validate();
}

Matrix embed(const Checkpoint& checkpoint, const Matrix& features) {
  return embed_features(checkpoint.model, checkpoint.config.loss, features);
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  checkpoint.config.validate();
  checkpoint.model.validate();
  checkpoint.bank.validate();

  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  }
  io::write_magic(os, "NNKC");
  io::write_u16(os, 1);

  json meta;
  meta["config"] = config_to_json(checkpoint.config);
  meta["class_ids"] = checkpoint.class_ids;
  const std::string meta_text = meta.dump();
  io::write_u64(os, meta_text.size());
  os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));

  for (const Layer& layer : checkpoint.model.layers) {
    os.put(2); // rank
    io::write_u64(os, static_cast<std::uint64_t>(layer.weight.rows()));
    io::write_u64(os, static_cast<std::uint64_t>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        io::write_f32(os, static_cast<float>(layer.weight(r, c)));
      }
    }
    os.put(1); // rank
    io::write_u64(os, static_cast<std::uint64_t>(layer.bias.size()));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      io::write_f32(os, static_cast<float>(layer.bias[i]));
    }
  }

  const CentreBank& bank = checkpoint.bank;
  io::write_u64(os, static_cast<std::uint64_t>(bank.size()));
  io::write_u64(os, static_cast<std::uint64_t>(bank.dim()));
  for (int r = 0; r < bank.size(); ++r) {
    for (int c = 0; c < bank.dim(); ++c) {
      io::write_f32(os, static_cast<float>(bank.centres(r, c)));
    }
  }
  for (int label : bank.labels) {
    io::write_u32(os, static_cast<std::uint32_t>(label));
  }
  for (int i = 0; i < bank.size(); ++i) {
    io::write_f32(os, static_cast<float>(bank.weights[i]));
  }
  io::write_u64(os, bank.version);
  if (!os) {
    throw std::runtime_error("save_checkpoint: write failed for " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  }
  io::expect_magic(is, "NNKC", "NNKC");
  const std::uint16_t version = io::read_u16(is, "NNKC version");
  if (version != 1) {
    io::fail(is, "NNKC: unsupported version " + std::to_string(version));
  }

  const std::uint64_t meta_len = io::read_u64(is, "NNKC metadata length");
  std::string meta_text(meta_len, '\0');
  if (!is.read(meta_text.data(), static_cast<std::streamsize>(meta_len))) {
    io::fail(is, "NNKC: truncated metadata");
  }
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("NNKC: invalid metadata JSON: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("config") || !meta.contains("class_ids")) {
    throw std::runtime_error("NNKC: metadata missing config or class_ids");
  }

  Checkpoint checkpoint;
  checkpoint.config = config_from_json(meta["config"]);
  checkpoint.class_ids = meta["class_ids"].get<std::vector<std::int64_t>>();

  const std::size_t layer_count =
      checkpoint.config.hidden_dims.size() + 1 +
      (checkpoint.config.loss == LossKind::kSoftmax ? 1 : 0);
  checkpoint.model.layers.resize(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    Layer& layer = checkpoint.model.layers[l];
    int rank = is.get();
    if (rank != 2) io::fail(is, "NNKC: expected rank-2 weight tensor");
    const std::uint64_t rows = io::read_u64(is, "NNKC weight rows");
    const std::uint64_t cols = io::read_u64(is, "NNKC weight cols");
    layer.weight = Matrix(rows, cols);
    for (std::uint64_t r = 0; r < rows; ++r) {
      for (std::uint64_t c = 0; c < cols; ++c) {
        layer.weight(r, c) = io::read_f32(is, "NNKC weight value");
      }
    }
    rank = is.get();
    if (rank != 1) io::fail(is, "NNKC: expected rank-1 bias tensor");
    const std::uint64_t size = io::read_u64(is, "NNKC bias size");
    if (size != rows) io::fail(is, "NNKC: bias size does not match layer");
    layer.bias = Vector(size);
    for (std::uint64_t i = 0; i < size; ++i) {
      layer.bias[i] = io::read_f32(is, "NNKC bias value");
    }
    const bool hidden = l < checkpoint.config.hidden_dims.size();
    layer.act = hidden ? Activation::kRelu : Activation::kNone;
    const bool is_embedding = l == checkpoint.config.hidden_dims.size();
    layer.dropout_rate = is_embedding ? checkpoint.config.embedding_dropout : 0.0;
  }
  checkpoint.model.validate();
  if (embedding_part(checkpoint.model, checkpoint.config.loss).output_dim() !=
      checkpoint.config.embedding_dim) {
    throw std::runtime_error("NNKC: tensor shapes disagree with config embedding_dim");
  }

  const std::uint64_t m = io::read_u64(is, "NNKC bank size");
  const std::uint64_t d = io::read_u64(is, "NNKC bank dim");
  CentreBank& bank = checkpoint.bank;
  bank.centres = Matrix(m, d);
  for (std::uint64_t r = 0; r < m; ++r) {
    for (std::uint64_t c = 0; c < d; ++c) {
      bank.centres(r, c) = io::read_f32(is, "NNKC centre value");
    }
  }
  bank.labels.resize(m);
  for (auto& label : bank.labels) {
    const std::uint32_t value = io::read_u32(is, "NNKC bank label");
    if (value >= checkpoint.class_ids.size()) {
      io::fail(is, "NNKC: bank label outside class table");
    }
    label = static_cast<int>(value);
  }
  bank.weights = Vector(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    bank.weights[i] = io::read_f32(is, "NNKC bank weight");
  }
  bank.version = io::read_u64(is, "NNKC bank version");
  bank.num_classes = static_cast<int>(checkpoint.class_ids.size());
  bank.validate();
  return checkpoint;
}

}  // namespace nnk
