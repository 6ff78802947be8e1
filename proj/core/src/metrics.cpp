#include "evorec/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace evorec {

RankingOutcome rank_target(const std::map<ItemId, double>& scores, const ItemId& target) {
  auto it = scores.find(target);
  if (it == scores.end()) throw Error("rank_target: target not among candidates");
  double ts = it->second;
  int greater = 0, equal = 0;
  for (const auto& [id, s] : scores) {
    if (id == target) continue;
    if (s > ts) ++greater;
    else if (s == ts) ++equal;
  }
  return {greater + equal + 1, static_cast<int>(scores.size())};
}

double ndcg_at_k(const RankingOutcome& outcome, int k) {
  if (outcome.target_rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(outcome.target_rank) + 1.0);
}

double hr_at_k(const RankingOutcome& outcome, int k) {
  return outcome.target_rank <= k ? 1.0 : 0.0;
}

MetricReport aggregate_scores(const std::vector<std::pair<double, double>>& per_user,
                              const std::string& phase) {
  if (per_user.empty()) throw Error("no evaluable users");
  MetricReport r;
  r.per_user = per_user;
  r.phase = phase;
  r.n_users = static_cast<int>(per_user.size());
  for (const auto& [ndcg, hr] : per_user) {
    r.ndcg_at_5 += ndcg;
    r.hr_at_5 += hr;
  }
  r.ndcg_at_5 /= r.n_users;
  r.hr_at_5 /= r.n_users;
  return r;
}

double score_of(const MetricReport& r) { return 0.5 * (r.ndcg_at_5 + r.hr_at_5); }

nlohmann::json metric_report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["ndcg_at_5"] = r.ndcg_at_5;
  j["hr_at_5"] = r.hr_at_5;
  j["phase"] = r.phase;
  j["n_users"] = r.n_users;
  auto pu = nlohmann::json::array();
  for (const auto& [n, h] : r.per_user) pu.push_back({n, h});
  j["per_user"] = pu;
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.ndcg_at_5 = j.at("ndcg_at_5").get<double>();
  r.hr_at_5 = j.at("hr_at_5").get<double>();
  r.phase = j.at("phase").get<std::string>();
  r.n_users = j.at("n_users").get<int>();
  if (j.contains("per_user")) {
    for (const auto& p : j["per_user"]) r.per_user.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  return r;
}

JudgeScores judge_codebase(const std::string& evolved_source, const std::string& seed_source,
                           const PromptRegistry& prompts, Gateway& llm) {
  if (evolved_source.empty() || seed_source.empty()) throw Error("judge_codebase: empty source");
  ChatRequest req;
  req.instruction_id = "I_JUDGE";
  req.prompt = prompts.render("I_JUDGE", {{"evolved_source", evolved_source},
                                          {"seed_source", seed_source}});
  nlohmann::json j;
  try {
    j = llm.chat_json(req);
  } catch (const LlmParseError& e) {
    throw JudgeError(std::string("judge reply unparseable: ") + e.what(), e.raw_reply);
  }
  JudgeScores s;
  auto take = [&](const char* key, double& dst) {
    if (!j.contains(key) || !j[key].is_number()) {
      throw JudgeError(std::string("judge reply missing numeric '") + key + "'", j.dump());
    }
    double v = j[key].get<double>();
    if (v < 1.0 || v > 10.0) {
      s.clamped = true;
      v = std::clamp(v, 1.0, 10.0);
    }
    dst = v;
  };
  take("creativity", s.creativity);
  take("explicitness", s.explicitness);
  take("insight", s.insight);
  take("personalization", s.personalization);
  if (j.contains("rationale") && j["rationale"].is_object()) {
    for (auto& [k, v] : j["rationale"].items()) {
      if (v.is_string()) s.rationale[k] = v.get<std::string>();
    }
  }
  return s;
}

}  // namespace evorec
