#include "evorec/sandbox.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

namespace evorec {

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Ok: return "OK";
    case RunStatus::Fail: return "FAIL";
    case RunStatus::Timeout: return "TIMEOUT";
  }
  return "FAIL";
}

std::variant<RunManifest, std::vector<std::string>> validate_manifest(const std::string& raw_bytes) {
  std::vector<std::string> violations;
  auto j = nlohmann::json::parse(raw_bytes, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    violations.push_back("unparseable manifest");
    return violations;
  }
  RunManifest m;
  m.raw = j;
  std::string status = j.value("status", "");
  if (status == "OK") m.status = RunStatus::Ok;
  else if (status == "FAIL") m.status = RunStatus::Fail;
  else if (status == "TIMEOUT") m.status = RunStatus::Timeout;
  else violations.push_back("missing or unknown status");
  m.phase = j.value("phase", "evaluate");
  m.wall_time = j.value("wall_time", 0.0);
  m.failure_log = j.value("failure_log", "");
  if (j.contains("artifacts") && j["artifacts"].is_object()) {
    for (auto& [k, v] : j["artifacts"].items())
      if (v.is_string()) m.artifacts[k] = v.get<std::string>();
  }
  if (j.contains("metrics")) {
    try {
      m.metrics = metric_report_from_json(j["metrics"]);
    } catch (const std::exception& e) {
      violations.push_back(std::string("unparseable metrics: ") + e.what());
    }
  }
  if (j.contains("d_raw")) m.d_raw = j["d_raw"];

  if (m.status == RunStatus::Ok) {
    if (m.phase == "evaluate" && !m.metrics) violations.push_back("metrics required when OK");
    if (m.phase == "diagnose" && (m.d_raw.is_null() || !m.d_raw.is_object() || m.d_raw.empty())) {
      violations.push_back("d_raw required when OK");
    }
  } else if (m.failure_log.empty()) {
    violations.push_back("failure_log required when status is " + to_string(m.status));
  }
  if (!violations.empty()) return violations;
  return m;
}

std::filesystem::path materialize(const CandidateCodebase& c,
                                  const std::filesystem::path& workspace_root) {
  // Validate every key before the first write.
  for (const auto& [path, _] : c.files) {
    std::filesystem::path p(path);
    if (p.is_absolute() || path.empty()) {
      throw DataError("candidate file path escapes workspace: '" + path + "'");
    }
    for (const auto& part : p) {
      if (part == "..") throw DataError("candidate file path escapes workspace: '" + path + "'");
    }
  }
  auto ws = workspace_root / c.id;
  std::filesystem::create_directories(ws);
  for (const auto& [path, content] : c.files) write_file(ws / path, content);
  return ws;
}

std::filesystem::path default_runner_path() {
  if (const char* env = std::getenv("EVOREC_CANDIDATE_BIN"); env && *env) return env;
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) return self.parent_path() / "evorec-candidate";
  return "evorec-candidate";
}

namespace {

RunManifest synthesized_failure(RunStatus status, const std::string& phase, const std::string& log,
                                double wall_time) {
  RunManifest m;
  m.status = status;
  m.phase = phase;
  m.failure_log = log.empty() ? "(no output captured)" : log;
  m.wall_time = wall_time;
  m.raw = {{"status", to_string(status)}, {"phase", phase}, {"failure_log", m.failure_log},
           {"wall_time", wall_time}};
  return m;
}

std::string find_entrypoint(const std::filesystem::path& workspace) {
  std::string found;
  for (const auto& e : std::filesystem::recursive_directory_iterator(workspace)) {
    if (e.is_regular_file() && e.path().extension() == ".pipeline") {
      if (!found.empty()) throw DataError("multiple pipeline entrypoints in workspace");
      found = e.path().string();
    }
  }
  if (found.empty()) throw DataError("no pipeline entrypoint in workspace");
  return found;
}

}  // namespace

RunManifest run_phase(const std::filesystem::path& workspace_arg, const std::string& phase,
                      const SandboxConfig& cfg) {
  // The child chdirs into the workspace, so every path handed to it must
  // survive that. Absolutize up front instead of case by case.
  auto workspace = std::filesystem::absolute(workspace_arg);
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::string entrypoint;
  try {
    entrypoint = find_entrypoint(workspace);
  } catch (const std::exception& e) {
    return synthesized_failure(RunStatus::Fail, phase, e.what(), 0);
  }
  auto out_dir = workspace / "out" / phase;
  std::filesystem::create_directories(out_dir);
  auto log_path = workspace / "logs" / (phase + ".log");
  std::filesystem::create_directories(log_path.parent_path());

  auto config_file = workspace / "runner_config.json";
  nlohmann::json rc;
  rc["rng_seed"] = cfg.rng_seed;
  rc["eval_phase"] = cfg.eval_phase;
  rc["artifacts_dir"] = (workspace / "out" / "train").string();
  write_file(config_file, rc.dump(2) + "\n");

  std::string runner = cfg.runner_path.empty() ? default_runner_path().string()
                                               : cfg.runner_path.string();
  if (!std::filesystem::path(runner).is_absolute()) {
    runner = std::filesystem::absolute(runner).string();
  }
  std::string data = std::filesystem::absolute(cfg.data_dir).string();
  std::string out = out_dir.string();
  std::string config = config_file.string();

  pid_t pid = fork();
  if (pid < 0) return synthesized_failure(RunStatus::Fail, phase, "fork failed", elapsed());
  if (pid == 0) {
    // child
    if (chdir(workspace.c_str()) != 0) _exit(126);
    int fd = open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      dup2(fd, 1);
      dup2(fd, 2);
      close(fd);
    }
    if (cfg.limits.memory_limit_bytes > 0) {
      rlimit rl{cfg.limits.memory_limit_bytes, cfg.limits.memory_limit_bytes};
      setrlimit(RLIMIT_AS, &rl);
    }
    setpgid(0, 0);  // own process group so the whole tree can be killed
    const char* argv[] = {runner.c_str(),   entrypoint.c_str(), "--phase", phase.c_str(),
                          "--data",         data.c_str(),       "--out",   out.c_str(),
                          "--config",       config.c_str(),     nullptr};
    execv(runner.c_str(), const_cast<char* const*>(argv));
    fprintf(stderr, "exec failed: %s: %s\n", runner.c_str(), strerror(errno));
    _exit(127);
  }

  // parent: poll for exit under the wall-time limit
  bool timed_out = false;
  int wstatus = 0;
  while (true) {
    pid_t r = waitpid(pid, &wstatus, WNOHANG);
    if (r == pid) break;
    if (r < 0) return synthesized_failure(RunStatus::Fail, phase, "waitpid failed", elapsed());
    if (elapsed() > cfg.limits.wall_time_limit_seconds) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &wstatus, 0);
      timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  double wall = elapsed();

  std::string captured;
  try {
    captured = read_file(log_path);
  } catch (...) {
  }
  if (timed_out) {
    return synthesized_failure(RunStatus::Timeout,
                               phase,
                               "wall time limit exceeded (" +
                                   format_double(cfg.limits.wall_time_limit_seconds) + " s)\n" +
                                   captured,
                               wall);
  }

  int exit_code = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 128 + WTERMSIG(wstatus);
  std::string manifest_bytes;
  try {
    manifest_bytes = read_file(out_dir / "manifest");
  } catch (...) {
    return synthesized_failure(RunStatus::Fail, phase,
                               "no manifest emitted (exit code " + std::to_string(exit_code) +
                                   ")\n" + captured,
                               wall);
  }
  auto validated = validate_manifest(manifest_bytes);
  if (std::holds_alternative<std::vector<std::string>>(validated)) {
    std::string msg = "invalid manifest:";
    for (const auto& v : std::get<std::vector<std::string>>(validated)) msg += " " + v + ";";
    return synthesized_failure(RunStatus::Fail, phase, msg + "\n" + captured, wall);
  }
  auto m = std::get<RunManifest>(validated);
  if (exit_code != 0 && m.status == RunStatus::Ok) {
    return synthesized_failure(RunStatus::Fail, phase,
                               "nonzero exit code " + std::to_string(exit_code) +
                                   " with OK manifest\n" + captured,
                               wall);
  }
  if (m.status != RunStatus::Ok && m.failure_log.empty()) m.failure_log = captured;
  m.wall_time = wall;
  return m;
}

}  // namespace evorec
