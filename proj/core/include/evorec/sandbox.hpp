#pragma once

#include <filesystem>
#include <optional>
#include <variant>

#include "evorec/candidate.hpp"
#include "evorec/metrics.hpp"

namespace evorec {

enum class RunStatus { Ok, Fail, Timeout };
std::string to_string(RunStatus s);

struct ResourceLimits {
  double wall_time_limit_seconds = 600;
  size_t memory_limit_bytes = 0;  // 0 = unlimited
};

struct RunManifest {
  RunStatus status = RunStatus::Fail;
  std::string phase;
  std::optional<MetricReport> metrics;
  nlohmann::json d_raw;  // null unless the diagnose phase emitted one
  std::map<std::string, std::string> artifacts;
  double wall_time = 0;
  std::string failure_log;
  nlohmann::json raw = nlohmann::json::object();  // full document, unknown keys preserved
};

// Schema check over raw manifest bytes. Unknown keys are preserved in
// RunManifest::raw so co-evolved diagnosis tools can add probe keys freely.
std::variant<RunManifest, std::vector<std::string>> validate_manifest(const std::string& raw_bytes);

// Writes the candidate's files under workspace_root/<candidate id>/. Any
// file key that escapes the workspace (absolute or containing "..") rejects
// the whole candidate before a single write.
std::filesystem::path materialize(const CandidateCodebase& c,
                                  const std::filesystem::path& workspace_root);

struct SandboxConfig {
  std::filesystem::path runner_path;  // the candidate runner binary
  std::filesystem::path data_dir;     // read-only dataset mount
  ResourceLimits limits;
  uint64_t rng_seed = 42;
  std::string eval_phase = "validation";
};

// Locates the default runner binary: $EVOREC_CANDIDATE_BIN, else
// "evorec-candidate" next to the current executable.
std::filesystem::path default_runner_path();

// Executes one candidate phase as a child process under the configured
// limits. All failure modes are encoded in the returned manifest status;
// nothing a candidate does crashes the caller.
RunManifest run_phase(const std::filesystem::path& workspace, const std::string& phase,
                      const SandboxConfig& cfg);

}  // namespace evorec
