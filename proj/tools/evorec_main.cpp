// evorec: front door for dataset preparation, single-candidate runs, and
// full evolution runs. Exit codes: 0 ok, 2 configuration, 3 data, 4 runtime.
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "evorec/candidate.hpp"
#include "evorec/dataset.hpp"
#include "evorec/evolution.hpp"
#include "evorec/personas.hpp"
#include "evorec/retrieval.hpp"
#include "evorec/sandbox.hpp"
#include "evorec/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct RunConfig {
  fs::path data_dir;
  fs::path out_dir;
  evorec::EvolutionConfig evolution;
  evorec::GatewayConfig gateway;
  fs::path corpus_dir;       // offline retrieval corpus, optional
  std::string live_search;   // live retrieval base URL, optional
  fs::path prompts_dir;      // template overrides, optional
  std::string seed_model = "seq_attention";
  bool seed_positional = true;
  int seed_epochs = 0;  // 0 = model default
};

evorec::GatewayConfig::Provider provider_from_string(const std::string& s) {
  if (s == "mock") return evorec::GatewayConfig::Provider::Mock;
  if (s == "live") return evorec::GatewayConfig::Provider::Live;
  if (s == "replay") return evorec::GatewayConfig::Provider::Replay;
  throw evorec::ConfigError("unknown gateway provider: " + s);
}

RunConfig load_run_config(const fs::path& file) {
  json j = json::parse(evorec::read_file(file));
  RunConfig rc;
  static const std::set<std::string> known = {
      "data_dir",    "out_dir",   "evolution", "gateway",
      "corpus_dir",  "live_search", "prompts_dir", "seed"};
  for (auto& [k, _] : j.items()) {
    if (!known.count(k)) throw evorec::ConfigError("unknown config key: " + k);
  }
  rc.data_dir = j.value("data_dir", "");
  rc.out_dir = j.value("out_dir", "");
  if (j.contains("evolution")) {
    auto& e = j["evolution"];
    static const std::set<std::string> ek = {"max_iterations", "sample_temperature", "seed",
                                             "sample_users",   "recommendation_k",  "retrieval_top_n",
                                             "sim_concurrency", "wall_time_limit_seconds",
                                             "memory_limit_bytes"};
    for (auto& [k, _] : e.items())
      if (!ek.count(k)) throw evorec::ConfigError("unknown evolution key: " + k);
    rc.evolution.max_iterations = e.value("max_iterations", rc.evolution.max_iterations);
    rc.evolution.sample_temperature = e.value("sample_temperature", rc.evolution.sample_temperature);
    rc.evolution.seed = e.value("seed", rc.evolution.seed);
    rc.evolution.sample_users = e.value("sample_users", rc.evolution.sample_users);
    rc.evolution.recommendation_k = e.value("recommendation_k", rc.evolution.recommendation_k);
    rc.evolution.retrieval_top_n = e.value("retrieval_top_n", rc.evolution.retrieval_top_n);
    rc.evolution.sim_concurrency = e.value("sim_concurrency", rc.evolution.sim_concurrency);
    rc.evolution.limits.wall_time_limit_seconds =
        e.value("wall_time_limit_seconds", rc.evolution.limits.wall_time_limit_seconds);
    rc.evolution.limits.memory_limit_bytes =
        e.value("memory_limit_bytes", rc.evolution.limits.memory_limit_bytes);
  }
  if (j.contains("gateway")) {
    auto& g = j["gateway"];
    static const std::set<std::string> gk = {"provider", "model", "base_url", "api_key_env",
                                             "timeout_seconds", "max_retries", "rate_limit_rpm",
                                             "script_path", "transcript_path"};
    for (auto& [k, _] : g.items())
      if (!gk.count(k)) throw evorec::ConfigError("unknown gateway key: " + k);
    rc.gateway.provider = provider_from_string(g.value("provider", "mock"));
    rc.gateway.model = g.value("model", rc.gateway.model);
    rc.gateway.base_url = g.value("base_url", rc.gateway.base_url);
    rc.gateway.api_key_env = g.value("api_key_env", rc.gateway.api_key_env);
    rc.gateway.timeout_seconds = g.value("timeout_seconds", rc.gateway.timeout_seconds);
    rc.gateway.max_retries = g.value("max_retries", rc.gateway.max_retries);
    rc.gateway.rate_limit_rpm = g.value("rate_limit_rpm", rc.gateway.rate_limit_rpm);
    rc.gateway.script_path = g.value("script_path", "");
    rc.gateway.transcript_path = g.value("transcript_path", "");
  }
  rc.corpus_dir = j.value("corpus_dir", "");
  rc.live_search = j.value("live_search", "");
  rc.prompts_dir = j.value("prompts_dir", "");
  if (j.contains("seed")) {
    auto& s = j["seed"];
    static const std::set<std::string> sk = {"model", "positional", "epochs"};
    for (auto& [k, _] : s.items())
      if (!sk.count(k)) throw evorec::ConfigError("unknown seed key: " + k);
    rc.seed_model = s.value("model", rc.seed_model);
    rc.seed_positional = s.value("positional", rc.seed_positional);
    rc.seed_epochs = s.value("epochs", rc.seed_epochs);
  }
  return rc;
}

void check_paths(const RunConfig& rc) {
  if (rc.data_dir.empty() || !fs::exists(rc.data_dir)) {
    throw evorec::ConfigError("data_dir not resolvable: '" + rc.data_dir.string() + "'");
  }
  if (rc.out_dir.empty()) throw evorec::ConfigError("out_dir is required");
  if (rc.gateway.provider == evorec::GatewayConfig::Provider::Mock &&
      !fs::exists(rc.gateway.script_path)) {
    throw evorec::ConfigError("mock gateway needs an existing script_path");
  }
  if (rc.gateway.provider == evorec::GatewayConfig::Provider::Live) {
    const char* key = std::getenv(rc.gateway.api_key_env.c_str());
    if (!key || !*key) {
      throw evorec::ConfigError("live gateway needs " + rc.gateway.api_key_env + " set");
    }
  }
  if (!rc.corpus_dir.empty() && !fs::exists(rc.corpus_dir / "manifest.json")) {
    throw evorec::ConfigError("corpus_dir has no manifest.json: " + rc.corpus_dir.string());
  }
  if (!rc.prompts_dir.empty() && !fs::exists(rc.prompts_dir)) {
    throw evorec::ConfigError("prompts_dir not resolvable: " + rc.prompts_dir.string());
  }
}

evorec::CandidateCodebase make_seed(const RunConfig& rc) {
  evorec::ModelConfig mc;
  mc.rng_seed = rc.evolution.seed;
  mc.positional = rc.seed_positional;
  if (rc.seed_epochs > 0) mc.max_epochs = rc.seed_epochs;
  auto kind = evorec::model_kind_from_string(rc.seed_model);
  return evorec::make_seed_candidate(kind, mc);
}

int cmd_prepare(const fs::path& interactions, const fs::path& attributes, const fs::path& out,
                uint64_t seed, int negatives, bool force) {
  if (fs::exists(out / "manifest.json") && !force) {
    fprintf(stderr, "refusing to overwrite prepared dataset at %s (use --force)\n",
            out.c_str());
    return kExitConfig;
  }
  auto d = evorec::load_interactions(interactions);
  if (!attributes.empty()) evorec::load_attributes(d, attributes);
  auto filtered = evorec::apply_five_core(d);
  auto split = evorec::leave_last_out_split(filtered, seed, negatives);
  std::vector<std::string> sources = {interactions.string()};
  if (!attributes.empty()) sources.push_back(attributes.string());
  evorec::save_dataset_dir(filtered, out, seed, sources);
  printf("prepared %zu users, %zu items, %zu interactions (five-core passes: %d)\n",
         filtered.users.size(), filtered.items.size(), filtered.interactions.size(),
         filtered.five_core_passes);
  printf("split seed %llu, %d negatives per user\n",
         static_cast<unsigned long long>(seed), split.negatives_per_user);
  return 0;
}

int cmd_evaluate(const fs::path& data_dir, const std::string& model_name, bool positional,
                 int epochs, uint64_t seed, const fs::path& out, const std::string& phase) {
  auto split = evorec::load_dataset_dir(data_dir);
  evorec::ModelConfig mc;
  mc.rng_seed = seed;
  mc.positional = positional;
  if (epochs > 0) mc.max_epochs = epochs;
  auto kind = evorec::model_kind_from_string(model_name);
  auto model = kind == evorec::ModelKind::MfBpr ? evorec::train_mf_bpr(split, mc)
                                                : evorec::train_sequential_attention(split, mc);
  auto report = evorec::evaluate_model(model, split, phase);
  if (!out.empty()) evorec::export_artifacts(model, split, out, phase);
  printf("%s\n", evorec::metric_report_to_json(report).dump(2).c_str());
  return 0;
}

int cmd_diagnose(const fs::path& data_dir, const fs::path& model_dir, uint64_t seed) {
  auto split = evorec::load_dataset_dir(data_dir);
  auto model = evorec::load_model(model_dir);
  auto diag = evorec::DiagSpec::parse(evorec::default_diag_source());
  auto d_raw = evorec::compute_d_raw(diag, model, split, seed);
  auto report = evorec::interpret_diagnosis(d_raw, diag.thresholds(), nullptr,
                                            evorec::PromptRegistry::with_builtins(), nullptr);
  json out = {{"d_raw", d_raw}, {"report", evorec::diagnosis_report_to_json(report)}};
  printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_simulate(const fs::path& config_file, const fs::path& model_dir) {
  auto rc = load_run_config(config_file);
  check_paths(rc);
  auto split = evorec::load_dataset_dir(rc.data_dir);
  auto model = evorec::load_model(model_dir);
  auto personas = evorec::build_personas(split.data);
  auto prompts = evorec::PromptRegistry::with_builtins();
  if (!rc.prompts_dir.empty()) prompts.load_directory(rc.prompts_dir);
  evorec::Gateway llm(rc.gateway);
  auto recommender = [&](const evorec::UserId& u) {
    return evorec::recommend_top_k(model, split, u, rc.evolution.recommendation_k).items;
  };
  auto report = evorec::run_simulator(split.data, personas, recommender,
                                      rc.evolution.sample_users, rc.evolution.seed, prompts, llm,
                                      rc.evolution.sim_concurrency);
  printf("%s\n", evorec::simulator_report_to_json(report).dump(2).c_str());
  return 0;
}

int cmd_evolve(const fs::path& config_file, bool resume, const fs::path& out_override) {
  auto rc = load_run_config(config_file);
  if (!out_override.empty()) rc.out_dir = out_override;
  check_paths(rc);
  rc.evolution.validate();
  if (fs::exists(rc.out_dir / "archive.json") && !resume) {
    fprintf(stderr, "run directory %s already holds an archive (use --resume)\n",
            rc.out_dir.c_str());
    return kExitConfig;
  }

  auto split = evorec::load_dataset_dir(rc.data_dir);
  auto personas = evorec::build_personas(split.data);
  auto prompts = evorec::PromptRegistry::with_builtins();
  if (!rc.prompts_dir.empty()) prompts.load_directory(rc.prompts_dir);
  evorec::Gateway llm(rc.gateway);
  std::unique_ptr<evorec::RetrievalBackend> retrieval;
  if (!rc.corpus_dir.empty()) {
    retrieval = std::make_unique<evorec::OfflineCorpusBackend>(rc.corpus_dir);
  } else if (!rc.live_search.empty()) {
    retrieval = std::make_unique<evorec::LiveSearchBackend>(rc.live_search);
  }

  evorec::EvolutionDeps deps;
  deps.split = &split;
  deps.data_dir = rc.data_dir;
  deps.run_dir = rc.out_dir;
  deps.runner_path = evorec::default_runner_path();
  deps.prompts = &prompts;
  deps.llm = &llm;
  deps.retrieval = retrieval.get();
  deps.personas = &personas;

  auto seed_candidate = make_seed(rc);
  auto result = evorec::run_evolution(rc.evolution, seed_candidate, deps, resume);
  const auto& best = result.archive.entry(result.best.id);
  printf("best candidate %s, validation score %s, peak iteration %d\n", result.best.id.c_str(),
         evorec::format_double(best.score).c_str(), result.peak_iteration);
  printf("test ndcg@5 %s, hr@5 %s\n", evorec::format_double(result.test_metrics.ndcg_at_5).c_str(),
         evorec::format_double(result.test_metrics.hr_at_5).c_str());
  return 0;
}

int cmd_report(const fs::path& run_dir, const fs::path& out_dir) {
  auto archive_path = run_dir / "archive.json";
  if (!fs::exists(archive_path)) {
    fprintf(stderr, "no archive.json under %s\n", run_dir.c_str());
    return kExitData;
  }
  auto archive = evorec::EvolutionArchive::load(archive_path);
  auto out = out_dir.empty() ? run_dir / "report" : out_dir;
  fs::create_directories(out);

  // Score trajectory: best-so-far per completed iteration.
  std::map<int, double> iter_scores;
  for (const auto& id : archive.sampleable_ids()) {
    const auto& e = archive.entry(id);
    auto it = iter_scores.find(e.candidate.iteration);
    if (it == iter_scores.end() || e.score > it->second) iter_scores[e.candidate.iteration] = e.score;
  }
  std::string traj = "iteration\tbest_new_score\n";
  double best_so_far = -1;
  for (int t = 0; t <= archive.completed_iterations; ++t) {
    auto it = iter_scores.find(t);
    if (it != iter_scores.end() && it->second > best_so_far) best_so_far = it->second;
    traj += std::to_string(t) + "\t" +
            (best_so_far < 0 ? "n/a" : evorec::format_double(best_so_far)) + "\n";
  }
  evorec::write_file(out / "trajectory.tsv", traj);

  std::string sim = "# Simulator failure tags\n\n| candidate | tag | prevalence |\n|---|---|---|\n";
  std::string diag = "# Diagnosis findings\n\n| candidate | severity | claim |\n|---|---|---|\n";
  std::string lineage = "# Lineage\n\n";
  for (const auto& id : archive.sampleable_ids()) {
    const auto& e = archive.entry(id);
    for (const auto& f : e.sim_report.common_failures) {
      sim += "| " + id + " | " + f.tag + " | " + evorec::format_double(f.prevalence) + " |\n";
    }
    if (e.diag_report.contains("findings")) {
      for (const auto& f : e.diag_report["findings"]) {
        diag += "| " + id + " | " + f.value("severity", "") + " | " + f.value("claim", "") + " |\n";
      }
    }
    lineage += "- " + id + " (iteration " + std::to_string(e.candidate.iteration) +
               ", score " + evorec::format_double(e.score) + ")";
    if (e.candidate.parent_id) lineage += " <- " + *e.candidate.parent_id;
    if (id == archive.best_id()) lineage += " [best]";
    lineage += "\n";
  }
  bool partial = false;
  // partial: events mention aborted iterations beyond completed entries, or no best yet
  if (archive.best_id().empty()) partial = true;
  std::string header;
  if (partial) header = "PARTIAL RUN: no completed candidate yet\n\n";
  evorec::write_file(out / "sim_tags.md", header + sim);
  evorec::write_file(out / "diag_findings.md", header + diag);
  evorec::write_file(out / "lineage.md", header + lineage);

  std::string events = "iteration\tcandidate\tkind\tdetail\n";
  for (const auto& ev : archive.events()) {
    events += std::to_string(ev.iteration) + "\t" + ev.candidate_id + "\t" + ev.kind + "\t" +
              ev.detail + "\n";
  }
  evorec::write_file(out / "events.tsv", events);
  printf("report written to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evorec: evolving recommender codebases with directional feedback"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "Five-core filter and split a raw dataset");
  fs::path p_inter, p_attr, p_out;
  uint64_t p_seed = 42;
  int p_negs = 99;
  bool p_force = false;
  prepare->add_option("--interactions", p_inter, "TSV interactions file")->required();
  prepare->add_option("--attributes", p_attr, "TSV item attributes file");
  prepare->add_option("--out", p_out, "Output dataset directory")->required();
  prepare->add_option("--seed", p_seed, "Split seed");
  prepare->add_option("--negatives", p_negs, "Sampled negatives per user");
  prepare->add_flag("--force", p_force, "Overwrite an existing prepared dataset");

  auto* evaluate = app.add_subcommand("evaluate", "Train and evaluate a seed model");
  fs::path e_data, e_out;
  std::string e_model = "mf_bpr", e_phase = "validation";
  bool e_nopos = false;
  int e_epochs = 0;
  uint64_t e_seed = 42;
  evaluate->add_option("--data", e_data, "Prepared dataset directory")->required();
  evaluate->add_option("--model", e_model, "mf_bpr | seq_attention");
  evaluate->add_option("--phase", e_phase, "validation | test");
  evaluate->add_flag("--no-positional", e_nopos, "Disable positional embeddings (sequential)");
  evaluate->add_option("--epochs", e_epochs, "Override max epochs");
  evaluate->add_option("--seed", e_seed, "Training seed");
  evaluate->add_option("--out", e_out, "Artifact output directory");

  auto* diagnose = app.add_subcommand("diagnose", "Run the default probe set on trained artifacts");
  fs::path d_data, d_model;
  uint64_t d_seed = 42;
  diagnose->add_option("--data", d_data, "Prepared dataset directory")->required();
  diagnose->add_option("--model-dir", d_model, "Artifact directory from evaluate")->required();
  diagnose->add_option("--seed", d_seed, "Probe sampling seed");

  auto* simulate = app.add_subcommand("simulate", "Run the user simulator on trained artifacts");
  fs::path s_config, s_model;
  simulate->add_option("--config", s_config, "Run config JSON")->required();
  simulate->add_option("--model-dir", s_model, "Artifact directory from evaluate")->required();

  auto* evolve = app.add_subcommand("evolve", "Run the full evolution loop");
  fs::path v_config, v_out;
  bool v_resume = false;
  evolve->add_option("--config", v_config, "Run config JSON")->required();
  evolve->add_option("--out", v_out, "Override out_dir from the config");
  evolve->add_flag("--resume", v_resume, "Continue from a persisted archive");

  auto* report = app.add_subcommand("report", "Render trajectory, tag, and lineage reports");
  fs::path r_run, r_out;
  report->add_option("--run", r_run, "Run directory with archive.json")->required();
  report->add_option("--out", r_out, "Report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(p_inter, p_attr, p_out, p_seed, p_negs, p_force);
    if (evaluate->parsed())
      return cmd_evaluate(e_data, e_model, !e_nopos, e_epochs, e_seed, e_out, e_phase);
    if (diagnose->parsed()) return cmd_diagnose(d_data, d_model, d_seed);
    if (simulate->parsed()) return cmd_simulate(s_config, s_model);
    if (evolve->parsed()) return cmd_evolve(v_config, v_resume, v_out);
    if (report->parsed()) return cmd_report(r_run, r_out);
  } catch (const evorec::ConfigError& e) {
    fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const evorec::DataError& e) {
    fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
