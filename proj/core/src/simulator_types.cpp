#include "evorec/simulator_types.hpp"

#include <algorithm>

namespace evorec {

const std::vector<std::string> kFailureTagVocabulary = {
    "category_mismatch", "popularity_bias", "low_diversity",
    "recency_ignored",   "price_mismatch",  "other",
};

bool is_known_failure_tag(const std::string& tag) {
  return std::find(kFailureTagVocabulary.begin(), kFailureTagVocabulary.end(), tag) !=
         kFailureTagVocabulary.end();
}

nlohmann::json critique_to_json(const UserCritique& c) {
  nlohmann::json j;
  j["user"] = c.user;
  auto vs = nlohmann::json::array();
  for (const auto& v : c.verdicts) {
    vs.push_back({{"item", v.item}, {"accept", v.accept}, {"reason", v.reason}});
  }
  j["verdicts"] = vs;
  j["failure_tags"] = c.failure_tags;
  j["text"] = c.free_text;
  j["fallback"] = c.fallback;
  return j;
}

nlohmann::json simulator_report_to_json(const SimulatorReport& r) {
  nlohmann::json j;
  auto cf = nlohmann::json::array();
  for (const auto& f : r.common_failures) {
    cf.push_back({{"tag", f.tag}, {"prevalence", f.prevalence}, {"quotes", f.quotes}});
  }
  j["common_failures"] = cf;
  j["narrative"] = r.narrative;
  j["sample_size"] = r.sample_size;
  return j;
}

SimulatorReport simulator_report_from_json(const nlohmann::json& j) {
  SimulatorReport r;
  for (const auto& f : j.at("common_failures")) {
    FailurePattern p;
    p.tag = f.at("tag").get<std::string>();
    p.prevalence = f.at("prevalence").get<double>();
    if (f.contains("quotes")) p.quotes = f["quotes"].get<std::vector<std::string>>();
    r.common_failures.push_back(std::move(p));
  }
  r.narrative = j.value("narrative", "");
  r.sample_size = j.value("sample_size", 0);
  return r;
}

}  // namespace evorec
