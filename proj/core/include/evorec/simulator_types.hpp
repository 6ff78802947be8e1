#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "evorec/dataset.hpp"

namespace evorec {

// Closed failure-tag vocabulary; free text rides alongside.
extern const std::vector<std::string> kFailureTagVocabulary;
bool is_known_failure_tag(const std::string& tag);

struct ItemVerdict {
  ItemId item;
  bool accept = false;
  std::string reason;
};

struct UserCritique {
  UserId user;
  std::vector<ItemVerdict> verdicts;  // exactly one per recommended item
  std::vector<std::string> failure_tags;
  std::string free_text;
  bool fallback = false;  // reply was unparseable; tags degraded to [other]
};

struct FailurePattern {
  std::string tag;
  double prevalence = 0;  // exact tag count / sample size
  std::vector<std::string> quotes;
};

struct SimulatorReport {
  std::vector<FailurePattern> common_failures;  // ranked by prevalence
  std::string narrative;
  int sample_size = 0;
};

struct SessionOutcome {
  double view = 0;     // viewed / shown over the whole session
  double satisfy = 0;  // 1..10
  int depth = 1;       // pages browsed
};

nlohmann::json critique_to_json(const UserCritique& c);
nlohmann::json simulator_report_to_json(const SimulatorReport& r);
SimulatorReport simulator_report_from_json(const nlohmann::json& j);

}  // namespace evorec
