#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evorec/candidate.hpp"
#include "evorec/personas.hpp"
#include "evorec/retrieval.hpp"
#include "evorec/sandbox.hpp"
#include "evorec/simulator.hpp"

namespace evorec {

struct ArchiveEntry {
  CandidateCodebase candidate;
  double score = 0;  // validation score(B)
  MetricReport metrics;
  SimulatorReport sim_report;
  nlohmann::json diag_report;  // serialized DiagnosisReport
  nlohmann::json d_raw;
  nlohmann::json manifests;  // phase -> raw manifest document
  std::string change_summary;
};

struct ArchiveEvent {
  int iteration = 0;
  std::string candidate_id;
  std::string kind;  // FAIL | TIMEOUT | edit_rejected | iteration_aborted | coevolution_revert | ...
  std::string detail;
};

// Population history: sampleable entries all have status OK and a complete
// feedback bundle; failed attempts live only in the event log.
class EvolutionArchive {
 public:
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  const ArchiveEntry& entry(const std::string& id) const;
  void add(ArchiveEntry e);
  const std::vector<std::string>& sampleable_ids() const { return order_; }
  size_t size() const { return order_.size(); }

  void record_event(ArchiveEvent e) { events_.push_back(std::move(e)); }
  const std::vector<ArchiveEvent>& events() const { return events_; }

  const std::string& best_id() const { return best_id_; }
  int peak_iteration() const { return peak_iteration_; }
  // Replaces best only on strictly better score; returns true when replaced.
  bool consider_best(const std::string& id, double score, int iteration);

  int completed_iterations = 0;

  void save(const std::filesystem::path& file) const;
  static EvolutionArchive load(const std::filesystem::path& file);

 private:
  std::map<std::string, ArchiveEntry> entries_;
  std::vector<std::string> order_;  // insertion order
  std::vector<ArchiveEvent> events_;
  std::string best_id_;
  double best_score_ = -1;
  int peak_iteration_ = 0;
};

struct DevModification {
  std::string target;
  std::string description;
  std::string expected_effect;
  std::string addresses;  // feedback item; empty => exploratory
  bool exploratory = false;
};

struct DevelopmentReport {
  std::string summary;
  std::vector<DevModification> modifications;
  std::vector<std::string> citations;
};

nlohmann::json dev_report_to_json(const DevelopmentReport& r);

struct StructuralGap {
  std::string component;
  std::string reason;
};

struct StructuralAnalysis {
  std::string flow;
  std::vector<std::string> added, removed, modified;
  std::string loss_description;
  std::vector<StructuralGap> gaps;
  int dropped_gaps = 0;  // gaps naming components absent from the codebase
};

nlohmann::json structural_analysis_to_json(const StructuralAnalysis& a);

struct EvolutionConfig {
  int max_iterations = 21;  // T
  double sample_temperature = 0.7;
  uint64_t seed = 42;
  size_t sample_users = 20;
  int recommendation_k = 10;  // list length shown to the simulator
  int retrieval_top_n = 3;
  int sim_concurrency = 4;
  ResourceLimits limits;

  void validate() const;
};

struct EvolutionDeps {
  const SplitDataset* split = nullptr;
  std::filesystem::path data_dir;
  std::filesystem::path run_dir;
  std::filesystem::path runner_path;  // empty = default
  const PromptRegistry* prompts = nullptr;
  Gateway* llm = nullptr;
  RetrievalBackend* retrieval = nullptr;  // may be null (no literature)
  const std::map<UserId, Persona>* personas = nullptr;
};

struct EvaluationOutcome {
  bool ok = false;
  bool cache_hit = false;
  int sandbox_runs = 0;
  std::string failure_log;
  ArchiveEntry entry;
};

class InitializationError : public Error {
 public:
  InitializationError(const std::string& what, std::string log)
      : Error(what), failure_log(std::move(log)) {}
  std::string failure_log;
};

EvolutionArchive init_archive(const CandidateCodebase& seed, const EvolutionConfig& cfg,
                              const EvolutionDeps& deps);

const CandidateCodebase& sample_parent(const EvolutionArchive& a, double temperature,
                                       uint64_t seed);

// Cached candidates return stored reports with zero sandbox runs.
EvaluationOutcome evaluate_codebase(const CandidateCodebase& c, EvolutionArchive& a,
                                    const EvolutionConfig& cfg, const EvolutionDeps& deps,
                                    int iteration);

std::string archive_digest(const EvolutionArchive& a, size_t cap = 10);

struct PlanResult {
  std::vector<ResearchQuery> queries;
  bool degraded = false;  // unparseable reply; planning proceeds feedback-only
};

PlanResult plan_queries(const SimulatorReport& r_sim, const nlohmann::json& r_diag,
                        const std::string& digest, const PromptRegistry& prompts, Gateway& llm);

DevelopmentReport build_dev_report(const SimulatorReport& r_sim, const nlohmann::json& r_diag,
                                   const std::string& digest, const SearchResult& docs,
                                   const PromptRegistry& prompts, Gateway& llm);

struct EvolveCodeResult {
  CandidateCodebase child;
  std::vector<std::string> rejected_paths;
};

EvolveCodeResult evolve_code(const DevelopmentReport& r_dev, const CandidateCodebase& parent,
                             const std::string& digest, const PromptRegistry& prompts, Gateway& llm);

std::optional<StructuralAnalysis> analyze_structure(const CandidateCodebase& child,
                                                    const std::string& diag_source,
                                                    const PromptRegistry& prompts, Gateway& llm);

struct CoevolutionResult {
  bool applied = false;
  std::string diag_source;  // the accepted source (new or carried over)
  std::string note;
};

// Plans, retrieves, and edits the diagnosis source, then dry-runs it in the
// sandbox against the child's trained artifacts. Any failure reverts to the
// parent diagnosis tool; the main loop is never blocked.
CoevolutionResult coevolve_diag(const SimulatorReport& r_sim, const StructuralAnalysis& analysis,
                                const std::string& digest, const CandidateCodebase& child,
                                const std::filesystem::path& child_workspace,
                                const EvolutionConfig& cfg, const EvolutionDeps& deps);

struct EvolutionResult {
  EvolutionArchive archive;
  CandidateCodebase best;
  int peak_iteration = 0;
  MetricReport test_metrics;  // the single final test evaluation
};

EvolutionResult run_evolution(const EvolutionConfig& cfg, const CandidateCodebase& seed,
                              const EvolutionDeps& deps, bool resume = false);

}  // namespace evorec
