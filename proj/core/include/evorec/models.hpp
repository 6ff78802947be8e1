#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "evorec/dataset.hpp"
#include "evorec/metrics.hpp"

namespace evorec {

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch(epoch) {}
  int epoch;
};

enum class ModelKind { MfBpr, SeqAttention };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  int embedding_dim = 50;
  int batch_size = 128;
  double learning_rate = 0.001;
  int max_epochs = 300;
  int max_sequence_length = 10;  // sequential only
  uint64_t rng_seed = 42;
  int patience = 20;       // early stopping on validation HR@5
  bool positional = true;  // sequential only; off = order-insensitive ablation

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0;
  double val_hr = 0;
};

struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
};

// Immutable after training; scoring is deterministic and thread-safe.
struct TrainedModel {
  ModelKind kind = ModelKind::MfBpr;
  ModelConfig cfg;
  std::vector<UserId> users;
  std::vector<ItemId> items;
  std::unordered_map<UserId, size_t> user_index;
  std::unordered_map<ItemId, size_t> item_index;

  Matrix user_emb;     // MF only
  Matrix item_emb;     // both model kinds
  Matrix pos_emb;      // sequential, positional variant; rows indexed from the
                       // sequence end (row 0 = last context item)
  std::vector<double> readout;      // sequential attention query
  std::vector<double> start_token;  // sequential cold-context fallback

  std::vector<EpochLog> training_log;

  double score(const UserId& user, const std::vector<ItemId>& context, const ItemId& item) const;
};

// Pairwise ranking loss -log sigmoid(dot(u,p) - dot(u,n)) for one triple,
// with analytic gradients. Exposed so the finite-difference check exercises
// the exact code path the trainer uses.
double bpr_pair_loss(const double* user, const double* pos, const double* neg, size_t dim,
                     double* g_user, double* g_pos, double* g_neg);

TrainedModel train_mf_bpr(const SplitDataset& split, const ModelConfig& cfg);
TrainedModel train_sequential_attention(const SplitDataset& split, const ModelConfig& cfg);

std::map<ItemId, double> score_candidates(const TrainedModel& m, const UserId& user,
                                          const std::vector<ItemId>& context,
                                          const std::vector<ItemId>& candidates);

struct TopKResult {
  std::vector<ItemId> items;
  bool truncated = false;  // k exceeded the available pool
};

// Top-k over the catalog minus the user's train history; ties broken by
// ascending item id after descending logit.
TopKResult recommend_top_k(const TrainedModel& m, const SplitDataset& split, const UserId& user, int k);

MetricReport evaluate_model(const TrainedModel& m, const SplitDataset& split, const std::string& phase);

// Artifact bundle: embeddings.txt ("rows cols" header + row-major values),
// score_table.txt, training_log.txt, model.json (full parameters for reload).
void export_artifacts(const TrainedModel& m, const SplitDataset& split,
                      const std::filesystem::path& dir, const std::string& phase = "validation");
TrainedModel load_model(const std::filesystem::path& dir);
Matrix load_embedding_matrix(const std::filesystem::path& file);

}  // namespace evorec
