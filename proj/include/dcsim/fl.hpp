#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcsim/common.hpp"
#include "dcsim/model.hpp"
#include "dcsim/rng.hpp"

namespace dcsim::fl {

// Dense logistic-regression parameters over a hashed feature space.
struct ModelParams {
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t dim() const { return weights.size(); }

  static ModelParams zeros(std::size_t d) {
    ModelParams p;
    p.weights.assign(d, 0.0);
    return p;
  }
};

// One example: active feature indices (implicit value 1) and a binary label.
struct DataRow {
  std::vector<std::uint32_t> indices;
  std::uint8_t label = 0;
};

struct Dataset {
  std::int64_t dim = 0;
  std::vector<DataRow> rows;

  double positive_fraction() const {
    if (rows.empty()) return 0.0;
    std::int64_t pos = 0;
    for (const auto& r : rows) pos += r.label;
    return static_cast<double>(pos) / static_cast<double>(rows.size());
  }
};

struct ClientDataset {
  std::int64_t client_index = 0;
  Dataset data;
  double positive_fraction = 0.0;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(const ModelParams& params, const DataRow& row) {
  double z = params.bias;
  for (auto idx : row.indices) {
    if (idx >= params.dim()) throw Error("feature index " + std::to_string(idx) +
                                         " out of range for dimension " +
                                         std::to_string(params.dim()));
    z += params.weights[idx];
  }
  return z;
}

// sigma(w.x + b)
inline double predict(const ModelParams& params, const DataRow& row) {
  return sigmoid(logit(params, row));
}

// loss_i = softplus(z) - y*z, numerically stable at large |z|.
inline double bce_loss(double z, std::uint8_t y) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return softplus - static_cast<double>(y) * z;
}

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

// Mean binary cross-entropy and its analytic gradient over the full dataset.
inline LossGradient lr_loss_gradient(const ModelParams& params, const Dataset& data) {
  if (data.rows.empty()) throw Error("lr_loss_gradient: empty dataset");
  LossGradient out;
  out.grad_weights.assign(params.dim(), 0.0);
  for (const auto& row : data.rows) {
    const double z = logit(params, row);
    out.loss += bce_loss(z, row.label);
    const double err = sigmoid(z) - static_cast<double>(row.label);
    for (auto idx : row.indices) out.grad_weights[idx] += err;
    out.grad_bias += err;
  }
  const double inv_n = 1.0 / static_cast<double>(data.rows.size());
  out.loss *= inv_n;
  for (auto& g : out.grad_weights) g *= inv_n;
  out.grad_bias *= inv_n;
  return out;
}

struct TrainResult {
  ModelParams params;
  double final_loss = 0.0;
};

// Full-batch gradient descent on BCE. Deterministic; the rng argument exists
// for strategies that shuffle per epoch, which full-batch training does not.
inline TrainResult train_local_lr(ModelParams params, const Dataset& data, std::int64_t epochs,
                                  double lr, RngStream* /*rng*/ = nullptr) {
  if (epochs < 1) throw Error("train_local_lr: epochs must be >= 1");
  if (lr < 0.0) throw Error("train_local_lr: negative learning rate");
  for (std::int64_t e = 0; e < epochs; ++e) {
    LossGradient g = lr_loss_gradient(params, data);
    if (!std::isfinite(g.loss))
      throw Error("train_local_lr: non-finite loss at epoch " + std::to_string(e + 1));
    for (std::size_t j = 0; j < params.weights.size(); ++j)
      params.weights[j] -= lr * g.grad_weights[j];
    params.bias -= lr * g.grad_bias;
  }
  double final_loss = lr_loss_gradient(params, data).loss;
  if (!std::isfinite(final_loss))
    throw Error("train_local_lr: non-finite loss after final epoch");
  return TrainResult{std::move(params), final_loss};
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Accuracy at the 0.5 threshold (p >= 0.5 predicts positive) and mean BCE.
inline Evaluation evaluate(const ModelParams& params, const Dataset& data) {
  if (data.rows.empty()) throw Error("evaluate: empty dataset");
  std::int64_t correct = 0;
  double loss = 0.0;
  for (const auto& row : data.rows) {
    const double z = logit(params, row);
    loss += bce_loss(z, row.label);
    const bool predicted = z >= 0.0;
    if (predicted == (row.label != 0)) ++correct;
  }
  return Evaluation{static_cast<double>(correct) / static_cast<double>(data.rows.size()),
                    loss / static_cast<double>(data.rows.size())};
}

// ---------------------------------------------------------------------------
// Partitioning

inline std::vector<ClientDataset> partition(const Dataset& data, std::int64_t n_clients,
                                            const PartitionSpec& spec, RngStream& rng) {
  if (n_clients < 1) throw Error("partition: n_clients must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(data.rows.size());
  if (n < n_clients) throw Error("partition: too few rows (" + std::to_string(n) + ") for " +
                                 std::to_string(n_clients) + " clients");

  // Per-client sizes: as even as possible, earlier clients take the remainder.
  std::vector<std::int64_t> sizes(n_clients, n / n_clients);
  for (std::int64_t i = 0; i < n % n_clients; ++i) ++sizes[i];

  std::vector<std::size_t> order(data.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  };

  std::vector<ClientDataset> out(n_clients);
  for (std::int64_t c = 0; c < n_clients; ++c) {
    out[c].client_index = c;
    out[c].data.dim = data.dim;
  }

  if (spec.kind == PartitionSpec::Kind::Iid) {
    shuffle(order);
    std::size_t cursor = 0;
    for (std::int64_t c = 0; c < n_clients; ++c) {
      for (std::int64_t i = 0; i < sizes[c]; ++i)
        out[c].data.rows.push_back(data.rows[order[cursor++]]);
    }
  } else {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
      (data.rows[i].label ? pos : neg).push_back(i);
    shuffle(pos);
    shuffle(neg);
    const std::int64_t n_high =
        std::llround(spec.high_pos_fraction_clients * static_cast<double>(n_clients));
    const std::int64_t pos_total = static_cast<std::int64_t>(pos.size());

    // Per-client positive targets, scaled so they exactly exhaust the
    // positive pool: the high/low fractions set the ratio between the two
    // client groups, the corpus sets the achievable level.
    std::vector<double> raw(n_clients, 0.0);
    double raw_sum = 0.0;
    for (std::int64_t c = 0; c < n_clients; ++c) {
      const double frac = c < n_high ? spec.pos_fraction_high : spec.pos_fraction_low;
      raw[c] = frac * static_cast<double>(sizes[c]);
      raw_sum += raw[c];
    }
    std::vector<std::int64_t> want(n_clients, 0);
    std::vector<double> remainder(n_clients, 0.0);
    std::int64_t assigned = 0;
    for (std::int64_t c = 0; c < n_clients; ++c) {
      const double scaled =
          raw_sum > 0.0 ? raw[c] * static_cast<double>(pos_total) / raw_sum : 0.0;
      want[c] = std::min<std::int64_t>(static_cast<std::int64_t>(scaled), sizes[c]);
      remainder[c] = scaled - static_cast<double>(want[c]);
      assigned += want[c];
    }
    // Distribute the leftover positives by largest remainder, then by index,
    // skipping clients that are already full.
    std::vector<std::int64_t> order(n_clients);
    for (std::int64_t c = 0; c < n_clients; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
      return a < b;
    });
    std::int64_t deficit = pos_total - assigned;
    while (deficit > 0) {
      bool progressed = false;
      for (std::int64_t c : order) {
        if (deficit == 0) break;
        if (want[c] < sizes[c]) {
          ++want[c];
          --deficit;
          progressed = true;
        }
      }
      if (!progressed) break;
    }

    std::size_t pos_cursor = 0, neg_cursor = 0;
    for (std::int64_t c = 0; c < n_clients; ++c) {
      for (std::int64_t i = 0; i < want[c]; ++i)
        out[c].data.rows.push_back(data.rows[pos[pos_cursor++]]);
      for (std::int64_t i = 0; i < sizes[c] - want[c]; ++i)
        out[c].data.rows.push_back(data.rows[neg[neg_cursor++]]);
    }
  }

  for (auto& client : out) client.positive_fraction = client.data.positive_fraction();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic CTR corpus

inline constexpr int kSyntheticFields = 8;

struct SyntheticCtr {
  Dataset data;
  ModelParams truth;
};

namespace detail {

inline DataRow synthetic_row(std::int64_t dim, const ModelParams& truth, RngStream& rng) {
  DataRow row;
  row.indices.reserve(kSyntheticFields);
  for (int f = 0; f < kSyntheticFields; ++f) {
    const std::uint64_t cardinality = 20 + 10 * static_cast<std::uint64_t>(f);
    const std::uint64_t category = rng.next_below(cardinality);
    const std::string token = "f" + std::to_string(f) + "_c" + std::to_string(category);
    row.indices.push_back(static_cast<std::uint32_t>(fnv1a64(token) % dim));
  }
  const double p = sigmoid(logit(truth, row));
  row.label = rng.next_double() < p ? 1 : 0;
  return row;
}

inline ModelParams synthetic_truth(std::int64_t dim, RngStream& rng) {
  ModelParams truth = ModelParams::zeros(dim);
  for (auto& w : truth.weights) w = 0.8 * rng.next_normal();
  return truth;
}

}  // namespace detail

// Hashed-categorical generator: 8 categorical fields of cardinality 20..90,
// feature index fnv1a64("f<field>_c<cat>") mod dim, labels Bernoulli(sigma(z))
// under a fixed ground-truth model that is returned alongside the rows.
inline SyntheticCtr generate_synthetic_ctr(std::int64_t n_rows, std::int64_t dim, RngStream& rng) {
  if (n_rows < 1) throw Error("generate_synthetic_ctr: n_rows must be >= 1");
  if (dim < 1) throw Error("generate_synthetic_ctr: dim must be >= 1");
  SyntheticCtr out;
  out.truth = detail::synthetic_truth(dim, rng);
  out.data.dim = dim;
  out.data.rows.reserve(n_rows);
  for (std::int64_t i = 0; i < n_rows; ++i)
    out.data.rows.push_back(detail::synthetic_row(dim, out.truth, rng));
  return out;
}

struct SyntheticCorpus {
  Dataset train;
  Dataset test;
  ModelParams truth;
};

// Train and test rows drawn from one stream so the pair is jointly seeded.
inline SyntheticCorpus make_synthetic_corpus(const SyntheticRef& ref, std::uint64_t seed) {
  RngStream rng(seed, "synthetic-ctr");
  SyntheticCorpus out;
  out.truth = detail::synthetic_truth(ref.dim, rng);
  out.train.dim = ref.dim;
  for (std::int64_t i = 0; i < ref.rows; ++i)
    out.train.rows.push_back(detail::synthetic_row(ref.dim, out.truth, rng));
  out.test.dim = ref.dim;
  for (std::int64_t i = 0; i < ref.test_rows; ++i)
    out.test.rows.push_back(detail::synthetic_row(ref.dim, out.truth, rng));
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string label_column;
  std::string device_column;  // optional
  std::vector<std::string> feature_columns;
  std::int64_t hash_dim = 1024;
};

inline CsvSchema parse_csv_schema(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("schema: syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  dcsim::detail::require_keys(doc, "schema", {"label", "device_id", "features", "hash_dim"},
                              {"label", "features"});
  CsvSchema out;
  out.label_column = dcsim::detail::get_string(doc, "schema", "label");
  if (doc.contains("device_id"))
    out.device_column = dcsim::detail::get_string(doc, "schema", "device_id");
  for (const auto& f : doc.at("features")) {
    if (!f.is_string()) throw ParseError("schema: features must be strings");
    out.feature_columns.push_back(f.get<std::string>());
  }
  if (out.feature_columns.empty()) throw ParseError("schema: features must be nonempty");
  out.hash_dim = dcsim::detail::get_int_or(doc, "schema", "hash_dim", 1024);
  if (out.hash_dim < 1) throw ParseError("schema: hash_dim must be >= 1");
  return out;
}

struct IngestResult {
  Dataset data;
  // Row indices grouped by the device column, in first-seen device order.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> device_groups;
};

inline IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw Error("ingest_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = s.find(',', pos);
      if (comma == std::string::npos) {
        cells.push_back(s.substr(pos));
        break;
      }
      cells.push_back(s.substr(pos, comma - pos));
      pos = comma + 1;
    }
    return cells;
  };

  const std::vector<std::string> header = split(line);
  auto column_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("ingest_csv: unknown column '" + name + "' in " + path);
  };

  const std::size_t label_col = column_of(schema.label_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.feature_columns) feature_cols.push_back(column_of(f));
  const bool has_device = !schema.device_column.empty();
  const std::size_t device_col = has_device ? column_of(schema.device_column) : 0;

  IngestResult out;
  out.data.dim = schema.hash_dim;
  std::map<std::string, std::size_t> group_index;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw Error("ingest_csv: malformed row at line " + std::to_string(line_no) + " in " + path);
    DataRow row;
    const std::string& label = cells[label_col];
    if (label == "0") row.label = 0;
    else if (label == "1") row.label = 1;
    else throw Error("ingest_csv: label must be 0 or 1 at line " + std::to_string(line_no));
    for (std::size_t fc : feature_cols) {
      const std::string token = header[fc] + "=" + cells[fc];
      row.indices.push_back(static_cast<std::uint32_t>(fnv1a64(token) % schema.hash_dim));
    }
    const std::size_t row_idx = out.data.rows.size();
    out.data.rows.push_back(std::move(row));
    if (has_device) {
      const std::string& dev = cells[device_col];
      auto it = group_index.find(dev);
      if (it == group_index.end()) {
        group_index.emplace(dev, out.device_groups.size());
        out.device_groups.push_back({dev, {row_idx}});
      } else {
        out.device_groups[it->second].second.push_back(row_idx);
      }
    }
  }
  if (out.data.rows.empty()) throw Error("ingest_csv: no data rows in " + path);
  return out;
}

}  // namespace dcsim::fl
