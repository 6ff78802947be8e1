#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evorec/dataset.hpp"
#include "evorec/llm.hpp"
#include "evorec/models.hpp"
#include "evorec/simulator_types.hpp"

namespace evorec {

struct ProbeResult {
  std::string probe_id;
  // scalar probes fill `value`; multi-valued probes fill `values`
  std::optional<double> value;
  std::map<std::string, double> values;
  std::vector<std::pair<std::string, int64_t>> core_findings;  // (attribute, count)
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json probe_result_to_json(const ProbeResult& r);
ProbeResult probe_result_from_json(const std::string& probe_id, const nlohmann::json& j);

// Mean pairwise cosine similarity over up to sample_size sampled rows.
// Zero-norm rows are skipped; the skip count lands in metadata.
ProbeResult probe_embedding_collapse(const Matrix& item_embeddings, size_t sample_size,
                                     uint64_t seed);

struct MarginRow {
  UserId user;
  ItemId positive;
  double positive_logit = 0;
  double negative_logit = 0;
};

// Global mean of Delta = s(u,v) - s(u,v') plus category counts among the
// bottom low_fraction of margins.
ProbeResult probe_ranking_margin(const std::vector<MarginRow>& rows,
                                 const std::unordered_map<ItemId, ItemAttributes>& attributes,
                                 double low_fraction);

using ContextScorer =
    std::function<std::map<ItemId, double>(const std::vector<ItemId>& context,
                                           const std::vector<ItemId>& candidates)>;

// swap_sensitivity: mean fraction of top-k items changed after swapping the
// last two context items; logit_delta_swap: mean |target logit change|.
// `catalog` is the candidate pool ranked for top-k.
ProbeResult probe_swap_sensitivity(const ContextScorer& scorer,
                                   const std::vector<std::vector<ItemId>>& sequences,
                                   const std::vector<ItemId>& catalog, int k);

// Mean unique-category count among each sequence owner's top-k items.
// Not part of the minimal probe trio; exists as a co-evolution target.
ProbeResult probe_recommendation_diversity(const ContextScorer& scorer,
                                           const std::vector<std::vector<ItemId>>& sequences,
                                           const std::vector<ItemId>& catalog,
                                           const std::unordered_map<ItemId, ItemAttributes>& attrs,
                                           int k);

nlohmann::json assemble_d_raw(const std::vector<ProbeResult>& probes);

enum class Severity { Info, Warn, Critical };
std::string to_string(Severity s);

struct ProbeThreshold {
  double warn = 0;
  double critical = 0;
  bool high_is_bad = true;  // false: low values are the failure direction
};

struct Finding {
  Severity severity = Severity::Info;
  std::string claim;
  std::vector<std::string> probe_ids;
};

enum class VerificationStatus { Confirmed, Refuted, Untestable };
std::string to_string(VerificationStatus v);

struct DiagnosisReport {
  std::vector<Finding> findings;
  std::map<std::string, VerificationStatus> verification;  // SIM failure tag -> status
  std::string narrative;
  bool narrative_degraded = false;  // gateway failed; deterministic parts only
};

nlohmann::json diagnosis_report_to_json(const DiagnosisReport& r);

// Which probe, if any, can check a given simulator failure tag.
extern const std::map<std::string, std::string> kTagProbeRegistry;

// Severity assignment and verification are pure functions of
// (d_raw, thresholds); the LLM contributes only the narrative.
DiagnosisReport interpret_diagnosis(const nlohmann::json& d_raw,
                                    const std::map<std::string, ProbeThreshold>& thresholds,
                                    const SimulatorReport* sim_report,
                                    const PromptRegistry& prompts, Gateway* llm);

}  // namespace evorec
