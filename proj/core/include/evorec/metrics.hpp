#pragma once

#include <map>
#include <string>
#include <vector>

#include "evorec/dataset.hpp"
#include "evorec/llm.hpp"

namespace evorec {

struct RankingOutcome {
  int target_rank = 0;  // 1-based
  int candidate_count = 0;
};

struct MetricReport {
  double ndcg_at_5 = 0;
  double hr_at_5 = 0;
  std::vector<std::pair<double, double>> per_user;  // (ndcg, hr)
  std::string phase;  // "validation" | "test"
  int n_users = 0;
};

struct JudgeScores {
  double creativity = 0;
  double explicitness = 0;
  double insight = 0;
  double personalization = 0;
  std::map<std::string, std::string> rationale;
  bool clamped = false;  // set when any score was outside [1,10]
};

class JudgeError : public Error {
 public:
  JudgeError(const std::string& what, std::string raw) : Error(what), raw_reply(std::move(raw)) {}
  std::string raw_reply;
};

// Rank of the target among all candidates by descending score. Ties are
// broken pessimistically: the target ranks last among equal scores.
RankingOutcome rank_target(const std::map<ItemId, double>& scores, const ItemId& target);

// Single-relevant-item NDCG: 1/log2(rank+1) within the cut-off, else 0.
double ndcg_at_k(const RankingOutcome& outcome, int k);
double hr_at_k(const RankingOutcome& outcome, int k);

MetricReport aggregate_scores(const std::vector<std::pair<double, double>>& per_user,
                              const std::string& phase);

// Scalar selection score for a candidate codebase.
double score_of(const MetricReport& r);

nlohmann::json metric_report_to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

JudgeScores judge_codebase(const std::string& evolved_source, const std::string& seed_source,
                           const PromptRegistry& prompts, Gateway& llm);

}  // namespace evorec
