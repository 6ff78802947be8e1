#include "evorec/models.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

namespace evorec {

namespace {

double dot(const double* a, const double* b, size_t d) {
  double s = 0;
  for (size_t i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void init_uniform(Matrix& m, Rng& rng, double scale) {
  for (auto& v : m.data) v = rng.uniform(-scale, scale);
}

struct SeqForward {
  std::vector<size_t> ctx;       // item rows actually used (empty => start token)
  std::vector<double> h;         // m x d flattened
  std::vector<double> att;       // softmax weights, size m
  std::vector<double> rep;       // d
  size_t m = 0;
};

// Attention pooling over the last max_sequence_length context items: a
// learned query vector attends over h_j = item_emb + pos_emb(j from end),
// the user representation is the attention-weighted sum, and candidate
// logits are dot products with item embeddings. Without positional
// embeddings the representation is a symmetric function of the context set,
// which makes the ablated variant exactly order-insensitive.
SeqForward seq_forward(const TrainedModel& model, const std::vector<size_t>& context_rows) {
  SeqForward f;
  size_t d = model.cfg.embedding_dim;
  size_t L = static_cast<size_t>(model.cfg.max_sequence_length);
  size_t start = context_rows.size() > L ? context_rows.size() - L : 0;
  f.ctx.assign(context_rows.begin() + start, context_rows.end());
  f.m = f.ctx.empty() ? 1 : f.ctx.size();
  f.h.assign(f.m * d, 0.0);
  for (size_t j = 0; j < f.m; ++j) {
    const double* e = f.ctx.empty() ? model.start_token.data() : model.item_emb.row(f.ctx[j]);
    size_t pos_row = f.m - 1 - j;  // 0 = last item
    const double* p = model.cfg.positional ? model.pos_emb.row(pos_row) : nullptr;
    for (size_t i = 0; i < d; ++i) f.h[j * d + i] = e[i] + (p ? p[i] : 0.0);
  }
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  f.att.resize(f.m);
  double mx = -1e300;
  for (size_t j = 0; j < f.m; ++j) {
    f.att[j] = dot(model.readout.data(), &f.h[j * d], d) * inv_sqrt_d;
    mx = std::max(mx, f.att[j]);
  }
  double z = 0;
  for (size_t j = 0; j < f.m; ++j) {
    f.att[j] = std::exp(f.att[j] - mx);
    z += f.att[j];
  }
  for (size_t j = 0; j < f.m; ++j) f.att[j] /= z;
  f.rep.assign(d, 0.0);
  for (size_t j = 0; j < f.m; ++j)
    for (size_t i = 0; i < d; ++i) f.rep[i] += f.att[j] * f.h[j * d + i];
  return f;
}

std::vector<size_t> rows_of(const TrainedModel& m, const std::vector<ItemId>& items) {
  std::vector<size_t> rows;
  rows.reserve(items.size());
  for (const auto& v : items) {
    auto it = m.item_index.find(v);
    if (it == m.item_index.end()) throw DataError("unknown item: " + v);
    rows.push_back(it->second);
  }
  return rows;
}

void check_finite(const Matrix& m, const char* name, int epoch) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw DivergenceError(std::string("non-finite value in ") + name + " at epoch " +
                                std::to_string(epoch),
                            epoch);
    }
  }
}

}  // namespace

std::string to_string(ModelKind k) {
  return k == ModelKind::MfBpr ? "mf_bpr" : "seq_attention";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mf_bpr") return ModelKind::MfBpr;
  if (s == "seq_attention") return ModelKind::SeqAttention;
  throw ConfigError("unknown model kind: " + s);
}

void ModelConfig::validate() const {
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
  if (batch_size < 1 || learning_rate <= 0 || max_epochs < 0 || max_sequence_length < 1 ||
      patience < 1) {
    throw ConfigError("model config values must be positive");
  }
}

double TrainedModel::score(const UserId& user, const std::vector<ItemId>& context,
                           const ItemId& item) const {
  auto iit = item_index.find(item);
  if (iit == item_index.end()) throw DataError("unknown item: " + item);
  size_t d = cfg.embedding_dim;
  if (kind == ModelKind::MfBpr) {
    auto uit = user_index.find(user);
    if (uit == user_index.end()) throw DataError("unknown user: " + user);
    return dot(user_emb.row(uit->second), item_emb.row(iit->second), d);
  }
  auto f = seq_forward(*this, rows_of(*this, context));
  return dot(f.rep.data(), item_emb.row(iit->second), d);
}

double bpr_pair_loss(const double* user, const double* pos, const double* neg, size_t dim,
                     double* g_user, double* g_pos, double* g_neg) {
  double x = dot(user, pos, dim) - dot(user, neg, dim);
  double g = sigmoid(x) - 1.0;  // d loss / d x
  if (g_user) {
    for (size_t i = 0; i < dim; ++i) {
      g_user[i] = g * (pos[i] - neg[i]);
      g_pos[i] = g * user[i];
      g_neg[i] = -g * user[i];
    }
  }
  return softplus(-x);
}

namespace {

struct TrainContext {
  std::vector<std::vector<size_t>> train_rows;       // per user, item rows in order
  std::vector<std::unordered_set<size_t>> history;   // per user, full-history item rows
};

TrainContext build_train_context(const SplitDataset& split, const TrainedModel& m) {
  TrainContext tc;
  tc.train_rows.resize(m.users.size());
  tc.history.resize(m.users.size());
  for (size_t u = 0; u < m.users.size(); ++u) {
    const auto& s = split.users[u].second;
    for (const auto& v : s.train) tc.train_rows[u].push_back(m.item_index.at(v));
    for (size_t idx : split.data.history(m.users[u])) {
      tc.history[u].insert(m.item_index.at(split.data.interactions[idx].item));
    }
  }
  return tc;
}

size_t sample_negative(Rng& rng, size_t n_items, const std::unordered_set<size_t>& hist) {
  if (hist.size() >= n_items) throw DataError("user history covers the whole catalog; no negatives");
  while (true) {
    size_t v = rng.index(n_items);
    if (!hist.count(v)) return v;
  }
}

void init_model_indices(TrainedModel& m, const SplitDataset& split) {
  m.users = split.data.users;
  m.items = split.data.items;
  for (size_t i = 0; i < m.users.size(); ++i) m.user_index[m.users[i]] = i;
  for (size_t i = 0; i < m.items.size(); ++i) m.item_index[m.items[i]] = i;
}

}  // namespace

TrainedModel train_mf_bpr(const SplitDataset& split, const ModelConfig& cfg) {
  cfg.validate();
  if (split.users.empty()) throw DataError("empty split");
  TrainedModel m;
  m.kind = ModelKind::MfBpr;
  m.cfg = cfg;
  init_model_indices(m, split);
  size_t d = cfg.embedding_dim;
  Rng rng(cfg.rng_seed);
  double scale = 0.5 / static_cast<double>(d);
  m.user_emb = Matrix(m.users.size(), d);
  m.item_emb = Matrix(m.items.size(), d);
  init_uniform(m.user_emb, rng, scale);
  init_uniform(m.item_emb, rng, scale);

  auto tc = build_train_context(split, m);
  std::vector<std::pair<size_t, size_t>> pairs;  // (user row, item row)
  for (size_t u = 0; u < m.users.size(); ++u)
    for (size_t v : tc.train_rows[u]) pairs.emplace_back(u, v);

  std::vector<double> gu(d), gp(d), gn(d);
  Matrix best_user = m.user_emb, best_item = m.item_emb;
  double best_hr = -1;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(pairs);
    double loss_sum = 0;
    for (const auto& [u, vp] : pairs) {
      size_t vn = sample_negative(rng, m.items.size(), tc.history[u]);
      double* pu = m.user_emb.row(u);
      double* qp = m.item_emb.row(vp);
      double* qn = m.item_emb.row(vn);
      loss_sum += bpr_pair_loss(pu, qp, qn, d, gu.data(), gp.data(), gn.data());
      for (size_t i = 0; i < d; ++i) {
        pu[i] -= cfg.learning_rate * gu[i];
        qp[i] -= cfg.learning_rate * gp[i];
        qn[i] -= cfg.learning_rate * gn[i];
      }
    }
    double loss = loss_sum / static_cast<double>(pairs.size());
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch), epoch);
    }
    check_finite(m.user_emb, "user embeddings", epoch);
    check_finite(m.item_emb, "item embeddings", epoch);
    double val_hr = evaluate_model(m, split, "validation").hr_at_5;
    m.training_log.push_back({epoch, loss, val_hr});
    if (val_hr > best_hr) {
      best_hr = val_hr;
      best_user = m.user_emb;
      best_item = m.item_emb;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (best_hr >= 0) {
    m.user_emb = std::move(best_user);
    m.item_emb = std::move(best_item);
  }
  return m;
}

TrainedModel train_sequential_attention(const SplitDataset& split, const ModelConfig& cfg) {
  cfg.validate();
  if (split.users.empty()) throw DataError("empty split");
  TrainedModel m;
  m.kind = ModelKind::SeqAttention;
  m.cfg = cfg;
  init_model_indices(m, split);
  size_t d = cfg.embedding_dim;
  size_t L = cfg.max_sequence_length;
  Rng rng(cfg.rng_seed);
  double scale = 0.5 / static_cast<double>(d);
  m.item_emb = Matrix(m.items.size(), d);
  init_uniform(m.item_emb, rng, scale);
  m.pos_emb = Matrix(L, d);
  if (cfg.positional) init_uniform(m.pos_emb, rng, scale);
  m.readout.resize(d);
  m.start_token.resize(d);
  for (auto& v : m.readout) v = rng.uniform(-scale, scale);
  for (auto& v : m.start_token) v = rng.uniform(-scale, scale);

  auto tc = build_train_context(split, m);
  // One example per sequence position: predict train item i from its prefix.
  std::vector<std::pair<size_t, size_t>> examples;  // (user row, position)
  for (size_t u = 0; u < m.users.size(); ++u)
    for (size_t i = 0; i < tc.train_rows[u].size(); ++i) examples.emplace_back(u, i);

  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto snapshot = [&]() {
    return std::tuple{m.item_emb, m.pos_emb, m.readout, m.start_token};
  };
  auto best = snapshot();
  double best_hr = -1;
  int since_best = 0;
  std::vector<double> grep(d), gh(d);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(examples);
    double loss_sum = 0;
    for (const auto& [u, i] : examples) {
      const auto& seq = tc.train_rows[u];
      std::vector<size_t> ctx(seq.begin(), seq.begin() + i);
      auto f = seq_forward(m, ctx);
      size_t vp = seq[i];
      size_t vn = sample_negative(rng, m.items.size(), tc.history[u]);
      const double* ep = m.item_emb.row(vp);
      const double* en = m.item_emb.row(vn);
      double x = dot(f.rep.data(), ep, d) - dot(f.rep.data(), en, d);
      loss_sum += softplus(-x);
      double g = sigmoid(x) - 1.0;

      // Gradients through the attention pooling.
      for (size_t k = 0; k < d; ++k) grep[k] = g * (ep[k] - en[k]);
      std::vector<double> ga(f.m), gt(f.m);
      double asum = 0;
      for (size_t j = 0; j < f.m; ++j) {
        ga[j] = dot(grep.data(), &f.h[j * d], d);
        asum += f.att[j] * ga[j];
      }
      for (size_t j = 0; j < f.m; ++j) gt[j] = f.att[j] * (ga[j] - asum);

      double lr = cfg.learning_rate;
      // target / negative embedding rows
      for (size_t k = 0; k < d; ++k) {
        m.item_emb.row(vp)[k] -= lr * g * f.rep[k];
        m.item_emb.row(vn)[k] -= lr * -g * f.rep[k];
      }
      // readout
      for (size_t k = 0; k < d; ++k) {
        double gr = 0;
        for (size_t j = 0; j < f.m; ++j) gr += gt[j] * f.h[j * d + k];
        m.readout[k] -= lr * gr * inv_sqrt_d;
      }
      // context rows and positional rows
      for (size_t j = 0; j < f.m; ++j) {
        for (size_t k = 0; k < d; ++k) {
          gh[k] = f.att[j] * grep[k] + gt[j] * m.readout[k] * inv_sqrt_d;
        }
        double* target = f.ctx.empty() ? m.start_token.data() : m.item_emb.row(f.ctx[j]);
        for (size_t k = 0; k < d; ++k) target[k] -= lr * gh[k];
        if (cfg.positional) {
          double* prow = m.pos_emb.row(f.m - 1 - j);
          for (size_t k = 0; k < d; ++k) prow[k] -= lr * gh[k];
        }
      }
    }
    double loss = loss_sum / static_cast<double>(examples.size());
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch), epoch);
    }
    check_finite(m.item_emb, "item embeddings", epoch);
    double val_hr = evaluate_model(m, split, "validation").hr_at_5;
    m.training_log.push_back({epoch, loss, val_hr});
    if (val_hr > best_hr) {
      best_hr = val_hr;
      best = snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (best_hr >= 0) std::tie(m.item_emb, m.pos_emb, m.readout, m.start_token) = best;
  return m;
}

std::map<ItemId, double> score_candidates(const TrainedModel& m, const UserId& user,
                                          const std::vector<ItemId>& context,
                                          const std::vector<ItemId>& candidates) {
  if (candidates.empty()) throw Error("score_candidates: empty candidate list");
  std::map<ItemId, double> out;
  size_t d = m.cfg.embedding_dim;
  if (m.kind == ModelKind::MfBpr) {
    auto uit = m.user_index.find(user);
    if (uit == m.user_index.end()) throw DataError("unknown user: " + user);
    const double* pu = m.user_emb.row(uit->second);
    for (const auto& v : candidates) {
      auto it = m.item_index.find(v);
      if (it == m.item_index.end()) throw DataError("unknown item: " + v);
      out[v] = dot(pu, m.item_emb.row(it->second), d);
    }
    return out;
  }
  auto f = seq_forward(m, rows_of(m, context));
  for (const auto& v : candidates) {
    auto it = m.item_index.find(v);
    if (it == m.item_index.end()) throw DataError("unknown item: " + v);
    out[v] = dot(f.rep.data(), m.item_emb.row(it->second), d);
  }
  return out;
}

TopKResult recommend_top_k(const TrainedModel& m, const SplitDataset& split, const UserId& user,
                           int k) {
  if (k < 1) throw Error("recommend_top_k: k must be >= 1");
  const auto& s = split.split_for(user);
  std::unordered_set<ItemId> train_items(s.train.begin(), s.train.end());
  std::vector<ItemId> pool;
  for (const auto& v : m.items)
    if (!train_items.count(v)) pool.push_back(v);
  auto scores = score_candidates(m, user, s.train, pool);
  std::vector<std::pair<double, ItemId>> ranked;
  ranked.reserve(pool.size());
  for (const auto& v : pool) ranked.emplace_back(scores.at(v), v);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  TopKResult r;
  r.truncated = static_cast<size_t>(k) > ranked.size();
  size_t take = std::min(static_cast<size_t>(k), ranked.size());
  for (size_t i = 0; i < take; ++i) r.items.push_back(ranked[i].second);
  return r;
}

MetricReport evaluate_model(const TrainedModel& m, const SplitDataset& split,
                            const std::string& phase) {
  bool test = phase == "test";
  if (!test && phase != "validation") throw ConfigError("phase must be validation or test");
  std::vector<std::pair<double, double>> per_user;
  for (const auto& [u, s] : split.users) {
    const ItemId& target = test ? s.test : s.validation;
    const auto& negs = test ? s.test_negatives : s.val_negatives;
    std::vector<ItemId> candidates;
    candidates.push_back(target);
    candidates.insert(candidates.end(), negs.begin(), negs.end());
    // Context for sequential models: train items plus the validation item in
    // the test phase (it precedes the test item chronologically).
    std::vector<ItemId> ctx = s.train;
    if (test) ctx.push_back(s.validation);
    auto scores = score_candidates(m, u, ctx, candidates);
    auto outcome = rank_target(scores, target);
    per_user.emplace_back(ndcg_at_k(outcome, 5), hr_at_k(outcome, 5));
  }
  return aggregate_scores(per_user, phase);
}

void export_artifacts(const TrainedModel& m, const SplitDataset& split,
                      const std::filesystem::path& dir, const std::string& phase) {
  std::filesystem::create_directories(dir);
  // embeddings.txt: "rows cols" header then row-major values
  std::string emb = std::to_string(m.item_emb.rows) + " " + std::to_string(m.item_emb.cols) + "\n";
  for (size_t r = 0; r < m.item_emb.rows; ++r) {
    const double* row = m.item_emb.row(r);
    for (size_t c = 0; c < m.item_emb.cols; ++c) {
      emb += format_double(row[c]);
      emb += c + 1 == m.item_emb.cols ? '\n' : ' ';
    }
  }
  write_file(dir / "embeddings.txt", emb);

  // score_table.txt: user, target, negatives, then one logit per candidate
  bool test = phase == "test";
  std::string table;
  for (const auto& [u, s] : split.users) {
    const ItemId& target = test ? s.test : s.validation;
    const auto& negs = test ? s.test_negatives : s.val_negatives;
    std::vector<ItemId> candidates;
    candidates.push_back(target);
    candidates.insert(candidates.end(), negs.begin(), negs.end());
    std::vector<ItemId> ctx = s.train;
    if (test) ctx.push_back(s.validation);
    auto scores = score_candidates(m, u, ctx, candidates);
    table += u + "\t" + target;
    for (const auto& n : negs) table += "\t" + n;
    for (const auto& c : candidates) table += "\t" + format_double(scores.at(c));
    table += "\n";
  }
  write_file(dir / "score_table.txt", table);

  std::string log;
  for (const auto& e : m.training_log) {
    log += std::to_string(e.epoch) + "\t" + format_double(e.loss) + "\t" + format_double(e.val_hr) + "\n";
  }
  write_file(dir / "training_log.txt", log);

  nlohmann::json j;
  j["kind"] = to_string(m.kind);
  j["embedding_dim"] = m.cfg.embedding_dim;
  j["max_sequence_length"] = m.cfg.max_sequence_length;
  j["positional"] = m.cfg.positional;
  j["users"] = m.users;
  j["items"] = m.items;
  j["user_emb"] = m.user_emb.data;
  j["item_emb"] = m.item_emb.data;
  j["pos_emb"] = m.pos_emb.data;
  j["readout"] = m.readout;
  j["start_token"] = m.start_token;
  write_file(dir / "model.json", j.dump());
}

TrainedModel load_model(const std::filesystem::path& dir) {
  auto j = nlohmann::json::parse(read_file(dir / "model.json"));
  TrainedModel m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.cfg.embedding_dim = j.at("embedding_dim").get<int>();
  m.cfg.max_sequence_length = j.at("max_sequence_length").get<int>();
  m.cfg.positional = j.at("positional").get<bool>();
  m.users = j.at("users").get<std::vector<std::string>>();
  m.items = j.at("items").get<std::vector<std::string>>();
  for (size_t i = 0; i < m.users.size(); ++i) m.user_index[m.users[i]] = i;
  for (size_t i = 0; i < m.items.size(); ++i) m.item_index[m.items[i]] = i;
  size_t d = m.cfg.embedding_dim;
  m.user_emb.data = j.at("user_emb").get<std::vector<double>>();
  m.user_emb.cols = d;
  m.user_emb.rows = m.user_emb.data.size() / d;
  m.item_emb.data = j.at("item_emb").get<std::vector<double>>();
  m.item_emb.cols = d;
  m.item_emb.rows = m.item_emb.data.size() / d;
  m.pos_emb.data = j.at("pos_emb").get<std::vector<double>>();
  m.pos_emb.cols = d;
  m.pos_emb.rows = m.pos_emb.data.size() / d;
  m.readout = j.at("readout").get<std::vector<double>>();
  m.start_token = j.at("start_token").get<std::vector<double>>();
  return m;
}

Matrix load_embedding_matrix(const std::filesystem::path& file) {
  auto text = read_file(file);
  auto lines = split(text, '\n');
  if (lines.empty()) throw ParseError("empty embeddings file");
  auto header = split(trim(lines[0]), ' ');
  if (header.size() != 2) throw ParseError("embeddings header must be 'rows cols'");
  Matrix m(std::stoul(header[0]), std::stoul(header[1]));
  size_t idx = 0;
  for (size_t li = 1; li < lines.size() && idx < m.data.size(); ++li) {
    for (const auto& tok : split(trim(lines[li]), ' ')) {
      if (tok.empty()) continue;
      if (idx >= m.data.size()) throw ParseError("embeddings file has more values than declared");
      m.data[idx++] = std::stod(tok);
    }
  }
  if (idx != m.data.size()) throw ParseError("embeddings file has fewer values than declared");
  return m;
}

}  // namespace evorec
