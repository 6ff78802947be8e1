#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "evorec/diagnosis.hpp"
#include "evorec/models.hpp"

namespace evorec {

// A versioned bundle of candidate source files: the recommendation pipeline
// plus its paired diagnosis tool. The unit of evolution.
struct CandidateCodebase {
  std::string id;  // content hash, invariant under file-map iteration order
  std::map<std::string, std::string> files;  // relative path -> source text
  std::optional<std::string> parent_id;
  int iteration = 0;
  std::string provenance;  // which development report produced it

  static std::string compute_id(const std::map<std::string, std::string>& files);
  void refresh_id() { id = compute_id(files); }

  // Exactly one file ends in .pipeline and exactly one in .diag; anything
  // else is a structural error.
  std::string pipeline_entrypoint() const;
  std::string diag_entrypoint() const;
};

// The pipeline source dialect the candidate runner interprets: key = value
// lines configuring the model, plus an optional fault directive used to
// exercise failure containment.
struct PipelineSpec {
  ModelKind model = ModelKind::MfBpr;
  ModelConfig config;
  std::string behavior = "normal";  // normal | crash:<phase> | hang:<phase> | garbage:<phase>

  static PipelineSpec parse(const std::string& source);
};

struct ProbeSpec {
  std::string name;
  std::map<std::string, std::string> params;
  std::optional<ProbeThreshold> threshold;

  double param_d(const std::string& key, double dflt) const;
  int param_i(const std::string& key, int dflt) const;
};

// The diagnosis tool source: one `probe <name> k=v...` line per probe.
struct DiagSpec {
  std::vector<ProbeSpec> probes;

  static DiagSpec parse(const std::string& source);
  std::map<std::string, ProbeThreshold> thresholds() const;
};

// Built-in seed candidates.
CandidateCodebase make_seed_candidate(ModelKind kind, const ModelConfig& cfg);
std::string default_diag_source();

struct RunnerArgs {
  std::filesystem::path entrypoint;
  std::string phase;  // train | evaluate | diagnose
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::filesystem::path config_file;
};

// Executes one phase of the candidate protocol in-process. Writes
// <out>/manifest and returns the process exit code (0 on OK). This is what
// the candidate runner binary calls; the sandbox runs it as a child process.
int run_candidate_phase(const RunnerArgs& args);

// Diagnose-phase probe evaluation, shared with co-evolution dry runs.
nlohmann::json compute_d_raw(const DiagSpec& diag, const TrainedModel& model,
                             const SplitDataset& split, uint64_t seed);

}  // namespace evorec
