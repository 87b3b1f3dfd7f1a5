#include "nnk/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "nnk/serialize.hpp"

namespace nnk {

namespace {

[[noreturn]] void csv_fail(const std::filesystem::path& path, std::size_t line,
                           const std::string& message) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + message);
}

double parse_double(std::string_view token, bool* ok) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  *ok = ec == std::errc() && ptr == token.data() + token.size();
  return value;
}

std::int64_t parse_label(std::string_view token, bool* ok) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  *ok = ec == std::errc() && ptr == token.data() + token.size();
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("load_dataset: cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(is, line)) {
    csv_fail(path, 1, "missing header");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string_view> tokens;
  split_commas(line, tokens);
  if (tokens.size() < 2 || tokens[0] != "label") {
    csv_fail(path, 1, "header must be label,f0,...,f{d-1}");
  }
  const std::size_t dim = tokens.size() - 1;
  for (std::size_t i = 0; i < dim; ++i) {
    if (tokens[i + 1] != "f" + std::to_string(i)) {
      csv_fail(path, 1, "header must be label,f0,...,f{d-1}");
    }
  }

  std::vector<std::int64_t> raw_labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_commas(line, tokens);
    if (tokens.size() != dim + 1) {
      csv_fail(path, line_no, "expected " + std::to_string(dim + 1) + " columns, got " +
                                  std::to_string(tokens.size()));
    }
    bool ok = false;
    const std::int64_t label = parse_label(tokens[0], &ok);
    if (!ok || label < 0) {
      csv_fail(path, line_no, "malformed label '" + std::string(tokens[0]) + "'");
    }
    raw_labels.push_back(label);
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = parse_double(tokens[i + 1], &ok);
      if (!ok) {
        csv_fail(path, line_no, "malformed feature '" + std::string(tokens[i + 1]) + "'");
      }
      if (!std::isfinite(v)) {
        csv_fail(path, line_no, "non-finite feature value");
      }
      // features are f32 on disk in both formats; quantise here so a CSV and
      // an NNKF encoding of the same data load identically
      values.push_back(static_cast<float>(v));
    }
  }
  if (raw_labels.empty()) {
    csv_fail(path, line_no, "no data rows");
  }

  Matrix features(raw_labels.size(), dim);
  for (std::size_t r = 0; r < raw_labels.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) features(r, c) = values[r * dim + c];
  }
  return make_dataset(std::move(features), raw_labels);
}

Dataset load_nnkf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_dataset: cannot open " + path.string());
  }
  io::expect_magic(is, "NNKF", "NNKF");
  const std::uint16_t version = io::read_u16(is, "NNKF version");
  if (version != 1) {
    io::fail(is, "NNKF: unsupported version " + std::to_string(version));
  }
  const std::uint64_t n = io::read_u64(is, "NNKF row count");
  const std::uint64_t d = io::read_u64(is, "NNKF feature dim");
  if (n == 0 || d == 0) {
    io::fail(is, "NNKF: empty dataset");
  }
  std::vector<std::int64_t> raw_labels(n);
  for (auto& label : raw_labels) {
    label = io::read_u32(is, "NNKF label");
  }
  Matrix features(n, d);
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint64_t c = 0; c < d; ++c) {
      const float v = io::read_f32(is, "NNKF feature");
      if (!std::isfinite(v)) {
        io::fail(is, "NNKF: non-finite feature value");
      }
      features(r, c) = v;
    }
  }
  return make_dataset(std::move(features), raw_labels);
}

}  // namespace

void Dataset::validate() const {
  if (static_cast<int>(labels.size()) != size()) {
    throw std::invalid_argument("Dataset: label count does not match feature rows");
  }
  const int C = num_classes();
  std::vector<char> seen(C, 0);
  for (int label : labels) {
    if (label < 0 || label >= C) {
      throw std::invalid_argument("Dataset: dense label outside [0, C)");
    }
    seen[label] = 1;
  }
  for (int c = 0; c < C; ++c) {
    if (!seen[c]) {
      throw std::invalid_argument("Dataset: dense label gap at class " + std::to_string(c));
    }
  }
}

Dataset make_dataset(Matrix features, const std::vector<std::int64_t>& raw_labels) {
  if (features.rows() != static_cast<Eigen::Index>(raw_labels.size())) {
    throw std::invalid_argument("make_dataset: label count does not match feature rows");
  }
  std::map<std::int64_t, int> dense;
  for (std::int64_t raw : raw_labels) dense.emplace(raw, 0);
  Dataset data;
  data.class_ids.reserve(dense.size());
  for (auto& [raw, id] : dense) {
    id = static_cast<int>(data.class_ids.size());
    data.class_ids.push_back(raw);
  }
  data.features = std::move(features);
  data.labels.reserve(raw_labels.size());
  for (std::int64_t raw : raw_labels) data.labels.push_back(dense[raw]);
  data.validate();
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) {
    throw std::runtime_error("load_dataset: cannot open " + path.string());
  }
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();
  if (std::string_view(magic, 4) == "NNKF") {
    return load_nnkf(path);
  }
  return load_csv(path);
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("save_csv: cannot open " + path.string());
  }
  os << "label";
  for (int c = 0; c < data.dim(); ++c) os << ",f" << c;
  os << "\n";
  char buf[64];
  for (int r = 0; r < data.size(); ++r) {
    os << data.class_ids[data.labels[r]];
    for (int c = 0; c < data.dim(); ++c) {
      // %.9g round-trips any f32 value exactly.
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(data.features(r, c))));
      os << ',' << buf;
    }
    os << "\n";
  }
  if (!os) {
    throw std::runtime_error("save_csv: write failed for " + path.string());
  }
}

void save_nnkf(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("save_nnkf: cannot open " + path.string());
  }
  io::write_magic(os, "NNKF");
  io::write_u16(os, 1);
  io::write_u64(os, static_cast<std::uint64_t>(data.size()));
  io::write_u64(os, static_cast<std::uint64_t>(data.dim()));
  for (int label : data.labels) {
    const std::int64_t raw = data.class_ids[label];
    if (raw < 0 || raw > 0xffffffffll) {
      throw std::runtime_error("save_nnkf: label does not fit u32");
    }
    io::write_u32(os, static_cast<std::uint32_t>(raw));
  }
  for (int r = 0; r < data.size(); ++r) {
    for (int c = 0; c < data.dim(); ++c) {
      io::write_f32(os, static_cast<float>(data.features(r, c)));
    }
  }
  if (!os) {
    throw std::runtime_error("save_nnkf: write failed for " + path.string());
  }
}

std::vector<int> align_labels(const Dataset& reference, const Dataset& other) {
  std::map<std::int64_t, int> dense;
  for (std::size_t id = 0; id < reference.class_ids.size(); ++id) {
    dense[reference.class_ids[id]] = static_cast<int>(id);
  }
  std::vector<int> aligned;
  aligned.reserve(other.labels.size());
  for (int label : other.labels) {
    const auto it = dense.find(other.class_ids[label]);
    if (it == dense.end()) {
      throw std::invalid_argument("align_labels: class " +
                                  std::to_string(other.class_ids[label]) +
                                  " not present in reference dataset");
    }
    aligned.push_back(it->second);
  }
  return aligned;
}

Dataset subset_by_class(const Dataset& data, const std::vector<int>& classes) {
  std::vector<char> wanted(data.num_classes(), 0);
  for (int c : classes) {
    if (c < 0 || c >= data.num_classes()) {
      throw std::invalid_argument("subset_by_class: class id outside dataset");
    }
    wanted[c] = 1;
  }
  std::vector<int> rows;
  for (int r = 0; r < data.size(); ++r) {
    if (wanted[data.labels[r]]) rows.push_back(r);
  }
  if (rows.empty()) {
    throw std::invalid_argument("subset_by_class: no rows selected");
  }
  Matrix features(rows.size(), data.dim());
  std::vector<std::int64_t> raw_labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features.row(i) = data.features.row(rows[i]);
    raw_labels[i] = data.class_ids[data.labels[rows[i]]];
  }
  return make_dataset(std::move(features), raw_labels);
}

}  // namespace nnk
