#include "evorec/evolution.hpp"

#include <algorithm>
#include <cmath>

namespace evorec {

const ArchiveEntry& EvolutionArchive::entry(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error("no archive entry: " + id);
  return it->second;
}

void EvolutionArchive::add(ArchiveEntry e) {
  const auto& id = e.candidate.id;
  if (!entries_.count(id)) order_.push_back(id);
  entries_[id] = std::move(e);
}

bool EvolutionArchive::consider_best(const std::string& id, double score, int iteration) {
  if (!best_id_.empty() && score <= best_score_) return false;
  best_id_ = id;
  best_score_ = score;
  peak_iteration_ = iteration;
  return true;
}

namespace {

nlohmann::json candidate_to_json(const CandidateCodebase& c) {
  nlohmann::json j;
  j["id"] = c.id;
  j["files"] = c.files;
  if (c.parent_id) j["parent_id"] = *c.parent_id;
  j["iteration"] = c.iteration;
  j["provenance"] = c.provenance;
  return j;
}

CandidateCodebase candidate_from_json(const nlohmann::json& j) {
  CandidateCodebase c;
  c.id = j.at("id").get<std::string>();
  c.files = j.at("files").get<std::map<std::string, std::string>>();
  if (j.contains("parent_id")) c.parent_id = j["parent_id"].get<std::string>();
  c.iteration = j.value("iteration", 0);
  c.provenance = j.value("provenance", "");
  return c;
}

}  // namespace

void EvolutionArchive::save(const std::filesystem::path& file) const {
  nlohmann::json j;
  auto entries = nlohmann::json::array();
  for (const auto& id : order_) {
    const auto& e = entries_.at(id);
    nlohmann::json je;
    je["candidate"] = candidate_to_json(e.candidate);
    je["score"] = e.score;
    je["metrics"] = metric_report_to_json(e.metrics);
    je["sim_report"] = simulator_report_to_json(e.sim_report);
    je["diag_report"] = e.diag_report;
    je["d_raw"] = e.d_raw;
    je["manifests"] = e.manifests;
    je["change_summary"] = e.change_summary;
    entries.push_back(std::move(je));
  }
  j["entries"] = entries;
  auto events = nlohmann::json::array();
  for (const auto& ev : events_) {
    events.push_back({{"iteration", ev.iteration},
                      {"candidate_id", ev.candidate_id},
                      {"kind", ev.kind},
                      {"detail", ev.detail}});
  }
  j["events"] = events;
  j["best_id"] = best_id_;
  j["best_score"] = best_score_;
  j["peak_iteration"] = peak_iteration_;
  j["completed_iterations"] = completed_iterations;
  write_file(file, j.dump(2) + "\n");
}

EvolutionArchive EvolutionArchive::load(const std::filesystem::path& file) {
  auto j = nlohmann::json::parse(read_file(file));
  EvolutionArchive a;
  for (const auto& je : j.at("entries")) {
    ArchiveEntry e;
    e.candidate = candidate_from_json(je.at("candidate"));
    e.score = je.at("score").get<double>();
    e.metrics = metric_report_from_json(je.at("metrics"));
    e.sim_report = simulator_report_from_json(je.at("sim_report"));
    e.diag_report = je.value("diag_report", nlohmann::json::object());
    e.d_raw = je.value("d_raw", nlohmann::json::object());
    e.manifests = je.value("manifests", nlohmann::json::object());
    e.change_summary = je.value("change_summary", "");
    a.add(std::move(e));
  }
  for (const auto& ev : j.at("events")) {
    a.events_.push_back({ev.at("iteration").get<int>(), ev.at("candidate_id").get<std::string>(),
                         ev.at("kind").get<std::string>(), ev.at("detail").get<std::string>()});
  }
  a.best_id_ = j.value("best_id", "");
  a.best_score_ = j.value("best_score", -1.0);
  a.peak_iteration_ = j.value("peak_iteration", 0);
  a.completed_iterations = j.value("completed_iterations", 0);
  return a;
}

nlohmann::json dev_report_to_json(const DevelopmentReport& r) {
  nlohmann::json j;
  j["summary"] = r.summary;
  auto mods = nlohmann::json::array();
  for (const auto& m : r.modifications) {
    mods.push_back({{"target", m.target},
                    {"description", m.description},
                    {"expected_effect", m.expected_effect},
                    {"addresses", m.addresses},
                    {"exploratory", m.exploratory}});
  }
  j["modifications"] = mods;
  j["citations"] = r.citations;
  return j;
}

nlohmann::json structural_analysis_to_json(const StructuralAnalysis& a) {
  nlohmann::json j;
  j["flow"] = a.flow;
  j["added"] = a.added;
  j["removed"] = a.removed;
  j["modified"] = a.modified;
  j["loss"] = a.loss_description;
  auto gaps = nlohmann::json::array();
  for (const auto& g : a.gaps) gaps.push_back({{"component", g.component}, {"reason", g.reason}});
  j["gaps"] = gaps;
  j["dropped_gaps"] = a.dropped_gaps;
  return j;
}

void EvolutionConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (sample_temperature < 0) throw ConfigError("sample_temperature must be >= 0");
  if (limits.wall_time_limit_seconds <= 0) throw ConfigError("wall time limit must be positive");
}

const CandidateCodebase& sample_parent(const EvolutionArchive& a, double temperature,
                                       uint64_t seed) {
  const auto& ids = a.sampleable_ids();
  if (ids.empty()) throw Error("sample_parent: empty archive");
  if (ids.size() == 1) return a.entry(ids[0]).candidate;
  std::vector<double> scores;
  scores.reserve(ids.size());
  for (const auto& id : ids) scores.push_back(a.entry(id).score);
  if (temperature <= 1e-12) {
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    return a.entry(ids[best]).candidate;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double z = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((scores[i] - mx) / temperature);
    z += w[i];
  }
  Rng rng(seed);
  double u = rng.real01() * z;
  double acc = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return a.entry(ids[i]).candidate;
  }
  return a.entry(ids.back()).candidate;
}

namespace {

SandboxConfig make_sandbox_config(const EvolutionConfig& cfg, const EvolutionDeps& deps,
                                  const std::string& eval_phase = "validation") {
  SandboxConfig sc;
  sc.runner_path = deps.runner_path;
  sc.data_dir = deps.data_dir;
  sc.limits = cfg.limits;
  sc.rng_seed = cfg.seed;
  sc.eval_phase = eval_phase;
  return sc;
}

std::string sim_report_text(const SimulatorReport& r) {
  std::string s = "sample size: " + std::to_string(r.sample_size) + "\n";
  for (const auto& f : r.common_failures) {
    s += "- " + f.tag + " (prevalence " + format_double(f.prevalence) + ")\n";
  }
  s += "narrative: " + r.narrative + "\n";
  return s;
}

std::string files_text(const CandidateCodebase& c) {
  std::string s;
  for (const auto& [path, content] : c.files) {
    s += "=== " + path + " ===\n" + content + "\n";
  }
  return s;
}

std::string docs_text(const SearchResult& docs) {
  if (docs.docs.empty()) return "(none)\n";
  std::string s;
  for (const auto& d : docs.docs) {
    s += "[" + d.doc_id + "] " + d.title + "\n" + d.snippet + "\n";
  }
  return s;
}

}  // namespace

EvaluationOutcome evaluate_codebase(const CandidateCodebase& c, EvolutionArchive& a,
                                    const EvolutionConfig& cfg, const EvolutionDeps& deps,
                                    int iteration) {
  EvaluationOutcome out;
  if (a.contains(c.id)) {
    out.ok = true;
    out.cache_hit = true;
    out.entry = a.entry(c.id);
    return out;
  }
  auto ws = materialize(c, deps.run_dir / "workspaces");
  auto sc = make_sandbox_config(cfg, deps);
  nlohmann::json manifests = nlohmann::json::object();
  RunManifest train_m = run_phase(ws, "train", sc);
  manifests["train"] = train_m.raw;
  ++out.sandbox_runs;
  if (train_m.status != RunStatus::Ok) {
    out.failure_log = train_m.failure_log;
    a.record_event({iteration, c.id, to_string(train_m.status), "train: " + train_m.failure_log});
    return out;
  }
  RunManifest eval_m = run_phase(ws, "evaluate", sc);
  manifests["evaluate"] = eval_m.raw;
  ++out.sandbox_runs;
  if (eval_m.status != RunStatus::Ok || !eval_m.metrics) {
    out.failure_log = eval_m.failure_log;
    a.record_event({iteration, c.id, to_string(eval_m.status), "evaluate: " + eval_m.failure_log});
    return out;
  }
  RunManifest diag_m = run_phase(ws, "diagnose", sc);
  manifests["diagnose"] = diag_m.raw;
  ++out.sandbox_runs;
  if (diag_m.status != RunStatus::Ok) {
    out.failure_log = diag_m.failure_log;
    a.record_event({iteration, c.id, to_string(diag_m.status), "diagnose: " + diag_m.failure_log});
    return out;
  }

  ArchiveEntry e;
  e.candidate = c;
  e.metrics = *eval_m.metrics;
  e.score = score_of(e.metrics);
  e.d_raw = diag_m.d_raw;
  e.manifests = manifests;

  // User simulator over the candidate's trained model.
  auto model = load_model(ws / "out" / "train");
  auto recommender = [&](const UserId& u) {
    return recommend_top_k(model, *deps.split, u, cfg.recommendation_k).items;
  };
  e.sim_report = run_simulator(deps.split->data, *deps.personas, recommender, cfg.sample_users,
                               mix_seed(cfg.seed, c.id), *deps.prompts, *deps.llm,
                               cfg.sim_concurrency);

  auto thresholds = DiagSpec::parse(c.files.at(c.diag_entrypoint())).thresholds();
  auto diag_report =
      interpret_diagnosis(e.d_raw, thresholds, &e.sim_report, *deps.prompts, deps.llm);
  e.diag_report = diagnosis_report_to_json(diag_report);

  out.ok = true;
  out.entry = std::move(e);
  return out;
}

EvolutionArchive init_archive(const CandidateCodebase& seed, const EvolutionConfig& cfg,
                              const EvolutionDeps& deps) {
  EvolutionArchive a;
  auto outcome = evaluate_codebase(seed, a, cfg, deps, 0);
  if (!outcome.ok) {
    throw InitializationError("seed candidate failed its dry run", outcome.failure_log);
  }
  a.add(outcome.entry);
  a.consider_best(seed.id, outcome.entry.score, 0);
  return a;
}

std::string archive_digest(const EvolutionArchive& a, size_t cap) {
  std::vector<std::string> ids = a.sampleable_ids();
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& x, const std::string& y) {
    return a.entry(x).score > a.entry(y).score;
  });
  if (ids.size() > cap) ids.resize(cap);
  std::string s;
  for (const auto& id : ids) {
    const auto& e = a.entry(id);
    s += "iteration " + std::to_string(e.candidate.iteration) + ", id " + id + ", score " +
         format_double(e.score);
    std::string tags;
    for (size_t i = 0; i < e.sim_report.common_failures.size() && i < 3; ++i) {
      tags += (i ? ", " : "") + e.sim_report.common_failures[i].tag;
    }
    if (!tags.empty()) s += ", top tags: " + tags;
    std::string findings;
    if (e.diag_report.contains("findings")) {
      size_t i = 0;
      for (const auto& f : e.diag_report["findings"]) {
        if (i++ >= 3) break;
        findings += (findings.empty() ? "" : " | ") + f.value("claim", "");
      }
    }
    if (!findings.empty()) s += ", top findings: " + findings;
    if (!e.change_summary.empty()) s += ", change: " + e.change_summary;
    s += "\n";
  }
  return s;
}

PlanResult plan_queries(const SimulatorReport& r_sim, const nlohmann::json& r_diag,
                        const std::string& digest, const PromptRegistry& prompts, Gateway& llm) {
  ChatRequest req;
  req.instruction_id = "I_PLAN";
  req.prompt = prompts.render("I_PLAN", {{"r_sim", sim_report_text(r_sim)},
                                         {"r_diag", r_diag.dump(2)},
                                         {"archive_digest", digest}});
  PlanResult out;
  try {
    auto j = llm.chat_json(req);
    for (const auto& q : j.at("queries")) {
      ResearchQuery rq;
      rq.text = q.at("text").get<std::string>();
      rq.motivation = q.value("motivation", "");
      if (!rq.text.empty()) out.queries.push_back(std::move(rq));
      if (out.queries.size() == 5) break;
    }
  } catch (const std::exception&) {
    out.degraded = true;
    out.queries.clear();
  }
  return out;
}

DevelopmentReport build_dev_report(const SimulatorReport& r_sim, const nlohmann::json& r_diag,
                                   const std::string& digest, const SearchResult& docs,
                                   const PromptRegistry& prompts, Gateway& llm) {
  ChatRequest req;
  req.instruction_id = "I_REPORT";
  req.prompt = prompts.render("I_REPORT", {{"r_sim", sim_report_text(r_sim)},
                                           {"r_diag", r_diag.dump(2)},
                                           {"docs", docs_text(docs)},
                                           {"archive_digest", digest}});
  auto j = llm.chat_json(req);  // LlmParseError propagates: iteration aborts
  DevelopmentReport r;
  r.summary = j.value("summary", "");
  if (j.contains("modifications")) {
    for (const auto& m : j["modifications"]) {
      DevModification dm;
      dm.target = m.value("target", "");
      dm.description = m.value("description", "");
      dm.expected_effect = m.value("expected_effect", "");
      dm.addresses = m.value("addresses", "");
      dm.exploratory = dm.addresses.empty();
      r.modifications.push_back(std::move(dm));
    }
  }
  if (j.contains("citations")) {
    for (const auto& c : j["citations"])
      if (c.is_string()) r.citations.push_back(c.get<std::string>());
  }
  return r;
}

EvolveCodeResult evolve_code(const DevelopmentReport& r_dev, const CandidateCodebase& parent,
                             const std::string& digest, const PromptRegistry& prompts,
                             Gateway& llm) {
  ChatRequest req;
  req.instruction_id = "I_CODE";
  req.prompt = prompts.render("I_CODE", {{"r_dev", dev_report_to_json(r_dev).dump(2)},
                                         {"files", files_text(parent)}});
  auto j = llm.chat_json(req);
  EvolveCodeResult out;
  out.child = parent;
  out.child.parent_id = parent.id;
  out.child.provenance = r_dev.summary;
  size_t applied = 0;
  if (j.contains("edits")) {
    for (const auto& e : j["edits"]) {
      std::string path = e.value("path", "");
      if (!out.child.files.count(path)) {
        out.rejected_paths.push_back(path);
        continue;
      }
      out.child.files[path] = e.value("content", "");
      ++applied;
    }
  }
  if (applied == 0) throw Error("evolve_code: all edits rejected or none proposed");
  out.child.refresh_id();
  return out;
}

std::optional<StructuralAnalysis> analyze_structure(const CandidateCodebase& child,
                                                    const std::string& diag_source,
                                                    const PromptRegistry& prompts, Gateway& llm) {
  ChatRequest req;
  req.instruction_id = "I_ANALYZE";
  req.prompt = prompts.render("I_ANALYZE", {{"files", files_text(child)},
                                            {"diag_source", diag_source}});
  nlohmann::json j;
  try {
    j = llm.chat_json(req);
  } catch (const LlmParseError&) {
    return std::nullopt;
  }
  StructuralAnalysis a;
  a.flow = j.value("flow", "");
  auto strings = [&](const char* key) {
    std::vector<std::string> v;
    if (j.contains(key))
      for (const auto& s : j[key])
        if (s.is_string()) v.push_back(s.get<std::string>());
    return v;
  };
  a.added = strings("added");
  a.removed = strings("removed");
  a.modified = strings("modified");
  a.loss_description = j.value("loss", "");
  if (j.contains("gaps")) {
    for (const auto& g : j["gaps"]) {
      StructuralGap gap;
      gap.component = g.value("component", "");
      gap.reason = g.value("reason", "");
      // a gap must reference something actually present in the codebase
      bool present = false;
      for (const auto& [path, content] : child.files) {
        if (path.find(gap.component) != std::string::npos ||
            content.find(gap.component) != std::string::npos) {
          present = true;
          break;
        }
      }
      if (present && !gap.component.empty()) a.gaps.push_back(std::move(gap));
      else a.dropped_gaps++;
    }
  }
  return a;
}

CoevolutionResult coevolve_diag(const SimulatorReport& r_sim, const StructuralAnalysis& analysis,
                                const std::string& digest, const CandidateCodebase& child,
                                const std::filesystem::path& child_workspace,
                                const EvolutionConfig& cfg, const EvolutionDeps& deps) {
  CoevolutionResult out;
  std::string diag_path = child.diag_entrypoint();
  out.diag_source = child.files.at(diag_path);

  auto analysis_text = structural_analysis_to_json(analysis).dump(2);
  if (analysis.gaps.empty() && r_sim.common_failures.empty()) {
    out.note = "no gaps and no simulator findings; diagnosis tool carried forward";
    return out;
  }
  try {
    // plan
    ChatRequest plan_req;
    plan_req.instruction_id = "I_PLAN_DIAG";
    plan_req.prompt = deps.prompts->render(
        "I_PLAN_DIAG", {{"analysis", analysis_text}, {"r_sim", sim_report_text(r_sim)}});
    std::vector<ResearchQuery> queries;
    auto pj = deps.llm->chat_json(plan_req);
    if (pj.contains("queries")) {
      for (const auto& q : pj["queries"]) {
        queries.push_back({q.value("text", ""), q.value("motivation", "")});
        if (queries.size() == 5) break;
      }
    }
    SearchResult docs;
    if (deps.retrieval && !queries.empty()) {
      docs = search(queries, cfg.retrieval_top_n, *deps.retrieval);
    }
    // report
    ChatRequest rep_req;
    rep_req.instruction_id = "I_REPORT_DIAG";
    rep_req.prompt = deps.prompts->render("I_REPORT_DIAG", {{"analysis", analysis_text},
                                                            {"docs", docs_text(docs)},
                                                            {"r_sim", sim_report_text(r_sim)}});
    auto rj = deps.llm->chat_json(rep_req);
    // code
    ChatRequest code_req;
    code_req.instruction_id = "I_CODE_DIAG";
    code_req.prompt = deps.prompts->render("I_CODE_DIAG",
                                           {{"r_dev", rj.dump(2)},
                                            {"diag_path", diag_path},
                                            {"diag_source", child.files.at(diag_path)}});
    auto cj = deps.llm->chat_json(code_req);
    std::string new_source;
    bool found = false;
    if (cj.contains("edits")) {
      for (const auto& e : cj["edits"]) {
        if (e.value("path", "") == diag_path) {
          new_source = e.value("content", "");
          found = true;
        }
      }
    }
    if (!found || new_source.empty()) {
      out.note = "no applicable diagnosis edit proposed";
      return out;
    }
    // dry run against the child's artifacts in the sandbox
    std::string old_source = child.files.at(diag_path);
    write_file(child_workspace / diag_path, new_source);
    auto sc = make_sandbox_config(cfg, deps);
    auto m = run_phase(child_workspace, "diagnose", sc);
    if (m.status == RunStatus::Ok && m.d_raw.is_object() && !m.d_raw.empty()) {
      out.applied = true;
      out.diag_source = new_source;
      out.note = "diagnosis tool updated";
    } else {
      write_file(child_workspace / diag_path, old_source);
      out.note = "dry run failed, reverted: " + m.failure_log;
    }
  } catch (const std::exception& e) {
    out.note = std::string("co-evolution step failed, diagnosis tool carried forward: ") + e.what();
  }
  return out;
}

EvolutionResult run_evolution(const EvolutionConfig& cfg, const CandidateCodebase& seed,
                              const EvolutionDeps& deps, bool resume) {
  cfg.validate();
  std::filesystem::create_directories(deps.run_dir);
  auto archive_path = deps.run_dir / "archive.json";

  EvolutionArchive archive;
  if (resume && std::filesystem::exists(archive_path)) {
    archive = EvolutionArchive::load(archive_path);
  } else {
    archive = init_archive(seed, cfg, deps);
    archive.save(archive_path);
  }

  for (int t = archive.completed_iterations + 1; t <= cfg.max_iterations; ++t) {
    auto iter_dir = deps.run_dir / ("iter_" + std::to_string(t));
    std::filesystem::create_directories(iter_dir);
    try {
      // Phase 1: evaluation (cached for already-scored parents)
      const auto& parent = sample_parent(archive, cfg.sample_temperature, mix_seed(cfg.seed, t));
      auto parent_eval = evaluate_codebase(parent, archive, cfg, deps, t);
      if (!parent_eval.ok) {
        archive.record_event({t, parent.id, "iteration_aborted", "parent evaluation failed"});
        archive.completed_iterations = t;
        archive.save(archive_path);
        continue;
      }
      if (!parent_eval.cache_hit) {
        archive.add(parent_eval.entry);
        archive.consider_best(parent.id, parent_eval.entry.score, t);
      }
      const auto& r_sim = parent_eval.entry.sim_report;
      const auto& r_diag = parent_eval.entry.diag_report;
      write_file(iter_dir / "r_sim.json", simulator_report_to_json(r_sim).dump(2) + "\n");
      write_file(iter_dir / "r_diag.json", r_diag.dump(2) + "\n");

      // Phase 2: feedback-aware planning & retrieval
      std::string digest = archive_digest(archive);
      auto plan = plan_queries(r_sim, r_diag, digest, *deps.prompts, *deps.llm);
      if (plan.degraded) {
        archive.record_event({t, parent.id, "planning_degraded", "unparseable query plan"});
      }
      SearchResult docs;
      if (deps.retrieval && !plan.queries.empty()) {
        docs = search(plan.queries, cfg.retrieval_top_n, *deps.retrieval);
      }

      // Phase 3: code evolution
      auto r_dev = build_dev_report(r_sim, r_diag, digest, docs, *deps.prompts, *deps.llm);
      write_file(iter_dir / "r_dev.json", dev_report_to_json(r_dev).dump(2) + "\n");
      auto evolved = evolve_code(r_dev, parent, digest, *deps.prompts, *deps.llm);
      for (const auto& p : evolved.rejected_paths) {
        archive.record_event({t, parent.id, "edit_rejected", "nonexistent path: " + p});
      }
      CandidateCodebase child = std::move(evolved.child);
      child.iteration = t;

      // Evaluate the child: train + evaluate in the sandbox.
      auto ws = materialize(child, deps.run_dir / "workspaces");
      auto sc = make_sandbox_config(cfg, deps);
      nlohmann::json manifests = nlohmann::json::object();
      auto train_m = run_phase(ws, "train", sc);
      manifests["train"] = train_m.raw;
      if (train_m.status != RunStatus::Ok) {
        archive.record_event({t, child.id, to_string(train_m.status), "train: " + train_m.failure_log});
        archive.completed_iterations = t;
        archive.save(archive_path);
        continue;
      }
      auto eval_m = run_phase(ws, "evaluate", sc);
      manifests["evaluate"] = eval_m.raw;
      if (eval_m.status != RunStatus::Ok || !eval_m.metrics) {
        archive.record_event({t, child.id, to_string(eval_m.status), "evaluate: " + eval_m.failure_log});
        archive.completed_iterations = t;
        archive.save(archive_path);
        continue;
      }

      // Phase 4: co-evolution of the diagnosis tool.
      auto analysis = analyze_structure(child, child.files.at(child.diag_entrypoint()),
                                        *deps.prompts, *deps.llm);
      if (analysis) {
        write_file(iter_dir / "r_analyze.json",
                   structural_analysis_to_json(*analysis).dump(2) + "\n");
        auto co = coevolve_diag(r_sim, *analysis, digest, child, ws, cfg, deps);
        if (co.applied) {
          child.files[child.diag_entrypoint()] = co.diag_source;
          child.refresh_id();
        }
        if (!co.note.empty()) archive.record_event({t, child.id, "coevolution", co.note});
      } else {
        archive.record_event({t, child.id, "coevolution_skipped", "unparseable structural analysis"});
      }
      auto diag_m = run_phase(ws, "diagnose", sc);
      manifests["diagnose"] = diag_m.raw;
      if (diag_m.status != RunStatus::Ok) {
        archive.record_event({t, child.id, to_string(diag_m.status), "diagnose: " + diag_m.failure_log});
        archive.completed_iterations = t;
        archive.save(archive_path);
        continue;
      }

      ArchiveEntry e;
      e.candidate = child;
      e.metrics = *eval_m.metrics;
      e.score = score_of(e.metrics);
      e.d_raw = diag_m.d_raw;
      e.manifests = manifests;
      e.change_summary = r_dev.summary;
      auto model = load_model(ws / "out" / "train");
      auto recommender = [&](const UserId& u) {
        return recommend_top_k(model, *deps.split, u, cfg.recommendation_k).items;
      };
      e.sim_report = run_simulator(deps.split->data, *deps.personas, recommender, cfg.sample_users,
                                   mix_seed(cfg.seed, child.id), *deps.prompts, *deps.llm,
                                   cfg.sim_concurrency);
      auto thresholds = DiagSpec::parse(child.files.at(child.diag_entrypoint())).thresholds();
      auto diag_report = interpret_diagnosis(e.d_raw, thresholds, &e.sim_report, *deps.prompts, deps.llm);
      e.diag_report = diagnosis_report_to_json(diag_report);

      archive.add(e);
      archive.consider_best(child.id, e.score, t);
    } catch (const LlmParseError& ex) {
      archive.record_event({t, "", "iteration_aborted", ex.what()});
    } catch (const Error& ex) {
      archive.record_event({t, "", "iteration_aborted", ex.what()});
    }
    archive.completed_iterations = t;
    archive.save(archive_path);
  }

  // Final: single test evaluation of the best candidate.
  EvolutionResult result;
  result.best = archive.entry(archive.best_id()).candidate;
  result.peak_iteration = archive.peak_iteration();
  {
    auto ws = materialize(result.best, deps.run_dir / "final");
    auto sc = make_sandbox_config(cfg, deps, "test");
    auto train_m = run_phase(ws, "train", sc);
    if (train_m.status == RunStatus::Ok) {
      auto eval_m = run_phase(ws, "evaluate", sc);
      if (eval_m.status == RunStatus::Ok && eval_m.metrics) result.test_metrics = *eval_m.metrics;
    }
  }
  archive.save(archive_path);
  result.archive = std::move(archive);
  return result;
}

}  // namespace evorec
