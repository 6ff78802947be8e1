// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and uses only public library API
// plus the candidate runner binary (EVOREC_CANDIDATE_BIN).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "evorec/candidate.hpp"
#include "evorec/diagnosis.hpp"
#include "evorec/evolution.hpp"
#include "evorec/metrics.hpp"
#include "evorec/models.hpp"
#include "evorec/personas.hpp"
#include "evorec/sandbox.hpp"
#include "evorec/simulator.hpp"
#include "helpers.hpp"

using namespace evorec;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Failure {
  std::string detail;
};

void expect(bool cond, const std::string& detail) {
  if (!cond) throw Failure{detail};
}

// ---------------------------------------------------------------------------
// 1. probe oracle equivalence

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

void criterion_1() {
  double t0 = now_seconds();
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    size_t rows = 2 + rng.index(63);  // 2..64
    size_t cols = 2 + rng.index(15);  // 2..16
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.uniform(-1, 1);
    auto r = probe_embedding_collapse(m, rows, 7);
    // brute-force mean pairwise cosine
    double sum = 0;
    size_t pairs = 0;
    for (size_t i = 0; i < rows; ++i) {
      for (size_t j = i + 1; j < rows; ++j) {
        double dot = 0, ni = 0, nj = 0;
        for (size_t c = 0; c < cols; ++c) {
          dot += m.row(i)[c] * m.row(j)[c];
          ni += m.row(i)[c] * m.row(i)[c];
          nj += m.row(j)[c] * m.row(j)[c];
        }
        sum += dot / (std::sqrt(ni) * std::sqrt(nj));
        ++pairs;
      }
    }
    double oracle = sum / static_cast<double>(pairs);
    expect(r.value.has_value(), "collapse probe returned no scalar");
    expect(near(*r.value, oracle, 1e-9),
           "collapse mismatch: " + format_double(*r.value) + " vs " + format_double(oracle));
  }
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MarginRow> rows;
    std::unordered_map<ItemId, ItemAttributes> attrs;
    size_t n = 20 + rng.index(60);
    double sum = 0;
    for (size_t i = 0; i < n; ++i) {
      MarginRow row;
      row.user = "u" + std::to_string(i % 7);
      row.positive = "i" + std::to_string(i);
      row.positive_logit = rng.uniform(-3, 3);
      row.negative_logit = rng.uniform(-3, 3);
      sum += row.positive_logit - row.negative_logit;
      ItemAttributes a;
      a.item = row.positive;
      a.category = i % 2 ? "odd" : "even";
      attrs[a.item] = a;
      rows.push_back(std::move(row));
    }
    auto r = probe_ranking_margin(rows, attrs, 0.1);
    double oracle = sum / static_cast<double>(n);
    expect(r.value.has_value(), "margin probe returned no scalar");
    expect(near(*r.value, oracle, 1e-9),
           "margin mismatch: " + format_double(*r.value) + " vs " + format_double(oracle));
  }
  expect(now_seconds() - t0 < 30.0, "probe oracle loop exceeded 30 s");
}

// ---------------------------------------------------------------------------
// 2. metric oracle equivalence

void criterion_2() {
  Rng rng(202);
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<ItemId, double> scores;
    std::vector<std::string> ids;
    for (int i = 0; i < 100; ++i) {
      std::string id = "c" + std::to_string(i);
      // coarse grid forces ties so the pessimistic rule is exercised
      scores[id] = std::round(rng.uniform(0, 1) * 20.0) / 20.0;
      ids.push_back(id);
    }
    const std::string& target = ids[rng.index(100)];
    double ts = scores[target];
    int oracle_rank = 1;
    for (const auto& [id, s] : scores) {
      if (id == target) continue;
      if (s >= ts) ++oracle_rank;  // pessimistic: ties rank ahead of the target
    }
    auto out = rank_target(scores, target);
    expect(out.target_rank == oracle_rank,
           "rank mismatch: " + std::to_string(out.target_rank) + " vs " +
               std::to_string(oracle_rank));
    double oracle_ndcg =
        oracle_rank <= 5 ? 1.0 / std::log2(static_cast<double>(oracle_rank) + 1.0) : 0.0;
    double oracle_hr = oracle_rank <= 5 ? 1.0 : 0.0;
    expect(ndcg_at_k(out, 5) == oracle_ndcg, "ndcg mismatch");
    expect(hr_at_k(out, 5) == oracle_hr, "hr mismatch");
  }
  expect(ndcg_at_k({1, 100}, 5) == 1.0, "rank 1 ndcg must be exactly 1.0");
  expect(ndcg_at_k({3, 100}, 5) == 0.5, "rank 3 ndcg must be exactly 0.5");
}

// ---------------------------------------------------------------------------
// 3. trait-formula fidelity

void criterion_3() {
  expect(compute_conformity({{5.0, 4.0}, {3.0, 4.0}}) == 1.0,
         "conformity((5,4),(3,4)) must be exactly 1.0");
  auto d = testutil::make_block_dataset(4, 8, 6);
  for (const auto& u : d.users) {
    expect(compute_activity(d, u) == static_cast<int>(d.history(u).size()),
           "activity must equal history length");
  }
  expect(compute_diversity({"a", "b", "a", "c"}) == 3, "diversity must count unique categories");

  Rng rng(303);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 3 + rng.index(38);
    std::map<UserId, TraitVector> table;
    for (size_t i = 0; i < n; ++i) {
      TraitVector t;
      t.activity = static_cast<int>(rng.index(20));
      t.conformity = std::round(rng.uniform(0, 4) * 4.0) / 4.0;
      t.diversity = static_cast<int>(rng.index(8));
      table["u" + std::to_string(i)] = t;
    }
    auto got = bucket_traits(table);
    expect(!got.degenerate, "table with >= 3 users must not be degenerate");
    // sort-and-cut oracle with integer cut indices and strict-below classing
    auto oracle_level = [&](auto value, std::vector<decltype(value)> all) {
      std::sort(all.begin(), all.end());
      size_t i1 = std::min((all.size() + 2) / 3, all.size() - 1);
      size_t i2 = std::min((2 * all.size() + 2) / 3, all.size() - 1);
      if (value < all[i1]) return TraitLevel::Low;
      if (value < all[i2]) return TraitLevel::Mid;
      return TraitLevel::High;
    };
    std::vector<int> act, div;
    std::vector<double> conf;
    for (const auto& [u, t] : table) {
      act.push_back(t.activity);
      conf.push_back(t.conformity);
      div.push_back(t.diversity);
    }
    for (const auto& [u, t] : table) {
      const auto& l = got.levels.at(u);
      expect(l.activity == oracle_level(t.activity, act), "activity bucket mismatch");
      expect(l.conformity == oracle_level(t.conformity, conf), "conformity bucket mismatch");
      expect(l.diversity == oracle_level(t.diversity, div), "diversity bucket mismatch");
    }
  }
}

// ---------------------------------------------------------------------------
// 4. gradient check

void criterion_4() {
  const size_t dim = 4;
  Rng rng(404);
  // a 3-user / 3-item instance: every (user, pos, neg) triple with pos != neg
  std::vector<std::vector<double>> users(3), items(3);
  for (auto& v : users) {
    v.resize(dim);
    for (auto& x : v) x = rng.uniform(-1, 1);
  }
  for (auto& v : items) {
    v.resize(dim);
    for (auto& x : v) x = rng.uniform(-1, 1);
  }
  const double eps = 1e-6;
  for (auto& u : users) {
    for (size_t p = 0; p < 3; ++p) {
      for (size_t q = 0; q < 3; ++q) {
        if (p == q) continue;
        std::vector<double> gu(dim), gp(dim), gn(dim);
        bpr_pair_loss(u.data(), items[p].data(), items[q].data(), dim, gu.data(), gp.data(),
                      gn.data());
        auto probe = [&](std::vector<double>& param, const std::vector<double>& grad) {
          for (size_t i = 0; i < dim; ++i) {
            double keep = param[i];
            param[i] = keep + eps;
            double hi = bpr_pair_loss(u.data(), items[p].data(), items[q].data(), dim, nullptr,
                                      nullptr, nullptr);
            param[i] = keep - eps;
            double lo = bpr_pair_loss(u.data(), items[p].data(), items[q].data(), dim, nullptr,
                                      nullptr, nullptr);
            param[i] = keep;
            double numeric = (hi - lo) / (2 * eps);
            double rel = std::abs(numeric - grad[i]) / std::max(std::abs(numeric), 1e-8);
            expect(rel < 1e-4, "gradient relative error " + format_double(rel));
          }
        };
        probe(u, gu);
        probe(items[p], gp);
        probe(items[q], gn);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 5. planted-structure learning

void criterion_5() {
  double t0 = now_seconds();
  auto d = testutil::make_block_dataset(20, 20, 18);  // 40 users, 40 items
  auto split = leave_last_out_split(d, 7);
  ModelConfig cfg;
  cfg.embedding_dim = 16;
  cfg.max_epochs = 80;
  cfg.learning_rate = 0.05;
  cfg.patience = 80;
  cfg.rng_seed = 42;
  auto m = train_mf_bpr(split, cfg);
  auto r = evaluate_model(m, split, "validation");
  expect(r.hr_at_5 >= 0.8, "HR@5 " + format_double(r.hr_at_5) + " below 0.8");
  expect(now_seconds() - t0 < 60.0, "training exceeded 60 s");
}

// ---------------------------------------------------------------------------
// 6. induced-deficiency reproduction

ProbeResult swap_probe_of(const TrainedModel& m, const SplitDataset& split, int k) {
  ContextScorer scorer = [&](const std::vector<ItemId>& ctx, const std::vector<ItemId>& cands) {
    return score_candidates(m, "", ctx, cands);
  };
  std::vector<std::vector<ItemId>> sequences;
  for (const auto& [u, s] : split.users) {
    if (s.train.size() >= 2) sequences.push_back(s.train);
  }
  return probe_swap_sensitivity(scorer, sequences, m.items, k);
}

void criterion_6() {
  auto d = testutil::make_chain_dataset(60, 40, 13);
  auto split = leave_last_out_split(d, 3);
  ModelConfig cfg;
  cfg.embedding_dim = 32;
  cfg.max_epochs = 200;
  cfg.learning_rate = 0.1;
  cfg.patience = 200;
  cfg.rng_seed = 42;

  auto trained = train_sequential_attention(split, cfg);
  auto r_trained = swap_probe_of(trained, split, 10);
  double sens = r_trained.values.at("swap_sensitivity");
  expect(sens > 0.05, "trained swap sensitivity " + format_double(sens) + " not > 0.05");

  cfg.positional = false;
  auto ablated = train_sequential_attention(split, cfg);
  auto r_ablated = swap_probe_of(ablated, split, 10);
  double a_sens = r_ablated.values.at("swap_sensitivity");
  double a_delta = r_ablated.values.at("logit_delta_swap");
  expect(a_sens < 0.01, "ablated swap sensitivity " + format_double(a_sens) + " not < 0.01");
  expect(a_delta < 1e-6, "ablated logit delta " + format_double(a_delta) + " not < 1e-6");

  auto prompts = PromptRegistry::with_builtins();
  auto thresholds = DiagSpec::parse(default_diag_source()).thresholds();
  auto d_raw = assemble_d_raw({r_ablated});
  auto report = interpret_diagnosis(d_raw, thresholds, nullptr, prompts, nullptr);
  bool labeled = false;
  for (const auto& f : report.findings) {
    if (f.claim.find("order-insensitive") != std::string::npos &&
        f.severity != Severity::Info) {
      labeled = true;
    }
  }
  expect(labeled, "interpret_diagnosis did not label the ablated model order-insensitive");
}

// ---------------------------------------------------------------------------
// shared mock-evolution scaffolding (criteria 7, 9, 11)

struct EvoEnv {
  testutil::TempDir root{"accept_evo"};
  SplitDataset split;
  std::map<UserId, Persona> personas;
  PromptRegistry prompts = PromptRegistry::with_builtins();
  CandidateCodebase seed;
  std::string pipeline_on;  // the seed pipeline with positional embeddings on

  EvoEnv() {
    auto d = testutil::make_chain_dataset(60, 40, 13);
    save_dataset_dir(d, root.path() / "data", 3, {"synthetic"});
    split = load_dataset_dir(root.path() / "data");
    personas = build_personas(split.data);
    ModelConfig cfg;
    cfg.embedding_dim = 32;
    cfg.max_epochs = 200;
    cfg.learning_rate = 0.1;
    cfg.patience = 200;
    cfg.rng_seed = 42;
    cfg.positional = false;
    seed = make_seed_candidate(ModelKind::SeqAttention, cfg);
    pipeline_on = seed.files.at("main.pipeline");
    auto pos = pipeline_on.find("positional = off");
    pipeline_on.replace(pos, std::string("positional = off").size(), "positional = on");
  }

  nlohmann::json base_script() const {
    auto fallback_pipeline = seed.files.at("main.pipeline") + "# revisit learning rate\n";
    nlohmann::json entries = nlohmann::json::array();
    entries.push_back({{"instruction_id", "I_SIM"}, {"reply", "{}"}});
    entries.push_back({{"instruction_id", "I_SUMMARIZE"},
                       {"reply", R"({"narrative": "lists look stale"})"}});
    entries.push_back({{"instruction_id", "I_DIAG"},
                       {"reply", R"({"narrative": "probe summary"})"}});
    entries.push_back({{"instruction_id", "I_PLAN"}, {"reply", R"({"queries": []})"}});
    // the positional fix is offered only when the diagnosis flags
    // order-insensitivity; everything else gets a cosmetic edit
    nlohmann::json fix_report = {
        {"summary", "enable positional encoding"},
        {"modifications",
         nlohmann::json::array({{{"target", "main.pipeline"},
                                 {"description", "turn positional embeddings on"},
                                 {"expected_effect", "order-aware next-item scoring"},
                                 {"addresses", "near-zero swap sensitivity"}}})}};
    entries.push_back({{"instruction_id", "I_REPORT"},
                       {"prompt_contains", "order-insensitive"},
                       {"reply", fix_report.dump()}});
    nlohmann::json dull_report = {
        {"summary", "minor tweak"},
        {"modifications", nlohmann::json::array({{{"target", "main.pipeline"},
                                                  {"description", "annotate"},
                                                  {"expected_effect", "none"},
                                                  {"addresses", "other"}}})}};
    entries.push_back({{"instruction_id", "I_REPORT"}, {"reply", dull_report.dump()}});
    nlohmann::json fix_edit = {
        {"edits", nlohmann::json::array(
                      {{{"path", "main.pipeline"}, {"content", pipeline_on}}})}};
    entries.push_back({{"instruction_id", "I_CODE"},
                       {"prompt_contains", "enable positional encoding"},
                       {"reply", fix_edit.dump()}});
    nlohmann::json dull_edit = {
        {"edits", nlohmann::json::array(
                      {{{"path", "main.pipeline"}, {"content", fallback_pipeline}}})}};
    entries.push_back({{"instruction_id", "I_CODE"}, {"reply", dull_edit.dump()}});
    entries.push_back({{"instruction_id", "I_ANALYZE"},
                       {"reply", R"({"flow": "load -> train -> score",
                                     "modified": ["main.pipeline"], "gaps": []})"}});
    entries.push_back({{"instruction_id", "I_PLAN_DIAG"}, {"reply", R"({"queries": []})"}});
    entries.push_back({{"instruction_id", "I_REPORT_DIAG"},
                       {"reply", R"({"summary": "no probe change needed"})"}});
    entries.push_back({{"instruction_id", "I_CODE_DIAG"}, {"reply", R"({"edits": []})"}});
    return entries;
  }

  EvolutionConfig config(int iterations) const {
    EvolutionConfig cfg;
    cfg.max_iterations = iterations;
    cfg.seed = 42;
    cfg.sample_users = 6;
    cfg.recommendation_k = 5;
    cfg.sim_concurrency = 2;
    cfg.limits.wall_time_limit_seconds = 120;
    return cfg;
  }

  EvolutionResult run(const std::string& tag, Gateway& llm, int iterations) {
    EvolutionDeps deps;
    deps.split = &split;
    deps.data_dir = root.path() / "data";
    deps.run_dir = root.path() / tag;
    deps.runner_path = testutil::candidate_runner();
    deps.prompts = &prompts;
    deps.llm = &llm;
    deps.personas = &personas;
    return run_evolution(config(iterations), seed, deps);
  }

  Gateway mock(const nlohmann::json& entries, const std::string& name,
               const std::filesystem::path& transcript = {}) {
    auto script = root.path() / name;
    testutil::write_mock_script(script, entries);
    GatewayConfig cfg;
    cfg.provider = GatewayConfig::Provider::Mock;
    cfg.script_path = script;
    cfg.transcript_path = transcript;
    return Gateway(cfg);
  }
};

struct Lineage {
  std::vector<std::pair<std::string, double>> entries;
  std::string best_id;
  int peak = 0;
};

Lineage lineage_of(const EvolutionResult& r) {
  Lineage l;
  for (const auto& id : r.archive.sampleable_ids()) {
    l.entries.emplace_back(id, r.archive.entry(id).score);
  }
  l.best_id = r.archive.best_id();
  l.peak = r.peak_iteration;
  return l;
}

bool operator==(const Lineage& a, const Lineage& b) {
  return a.entries == b.entries && a.best_id == b.best_id && a.peak == b.peak;
}

// ---------------------------------------------------------------------------
// 7. end-to-end directional-feedback run

void criterion_7() {
  double t0 = now_seconds();
  EvoEnv env;
  auto llm = env.mock(env.base_script(), "c7.json");
  auto result = env.run("c7", llm, 3);

  double seed_hr = result.archive.entry(env.seed.id).metrics.hr_at_5;
  double best_hr = result.archive.entry(result.archive.best_id()).metrics.hr_at_5;
  expect(result.archive.best_id() != env.seed.id, "best candidate never improved on the seed");
  expect(best_hr > seed_hr && best_hr >= 1.2 * seed_hr,
         "best HR@5 " + format_double(best_hr) + " not a 20% relative gain over seed " +
             format_double(seed_hr));
  expect(result.peak_iteration >= 1, "peak_iteration must be >= 1");
  expect(result.archive.completed_iterations == 3, "run did not complete all iterations");
  expect(now_seconds() - t0 < 600.0, "evolution run exceeded 10 minutes");
}

// ---------------------------------------------------------------------------
// 8. cache soundness

nlohmann::json entry_fingerprint(const ArchiveEntry& e) {
  nlohmann::json j;
  j["candidate_id"] = e.candidate.id;
  j["score"] = e.score;
  j["metrics"] = metric_report_to_json(e.metrics);
  j["sim_report"] = simulator_report_to_json(e.sim_report);
  j["diag_report"] = e.diag_report;
  j["d_raw"] = e.d_raw;
  j["manifests"] = e.manifests;
  return j;
}

void criterion_8() {
  testutil::TempDir root("accept_cache");
  auto d = testutil::make_block_dataset(6, 10, 8);
  save_dataset_dir(d, root.path() / "data", 11, {"synthetic"});
  auto split = load_dataset_dir(root.path() / "data");
  auto personas = build_personas(split.data);
  auto prompts = PromptRegistry::with_builtins();
  auto script = root.path() / "script.json";
  testutil::write_mock_script(
      script, nlohmann::json::array(
                  {{{"instruction_id", "I_SIM"}, {"reply", "{}"}},
                   {{"instruction_id", "I_SUMMARIZE"}, {"reply", R"({"narrative": "n"})"}},
                   {{"instruction_id", "I_DIAG"}, {"reply", R"({"narrative": "d"})"}}}));
  GatewayConfig gc;
  gc.provider = GatewayConfig::Provider::Mock;
  gc.script_path = script;
  Gateway llm(gc);

  ModelConfig mc;
  mc.embedding_dim = 8;
  mc.max_epochs = 10;
  mc.learning_rate = 0.05;
  mc.rng_seed = 42;
  auto seed = make_seed_candidate(ModelKind::MfBpr, mc);

  EvolutionConfig cfg;
  cfg.sample_users = 4;
  cfg.sim_concurrency = 2;
  cfg.limits.wall_time_limit_seconds = 120;
  EvolutionDeps deps;
  deps.split = &split;
  deps.data_dir = root.path() / "data";
  deps.run_dir = root.path() / "run";
  deps.runner_path = testutil::candidate_runner();
  deps.prompts = &prompts;
  deps.llm = &llm;
  deps.personas = &personas;

  auto archive = init_archive(seed, cfg, deps);
  auto first = entry_fingerprint(archive.entry(seed.id));
  auto again = evaluate_codebase(seed, archive, cfg, deps, 1);
  expect(again.ok && again.cache_hit, "re-evaluation must be a cache hit");
  expect(again.sandbox_runs == 0, "cache hit must spawn zero sandbox processes");
  expect(entry_fingerprint(again.entry).dump() == first.dump(),
         "cached report is not byte-identical");
}

// ---------------------------------------------------------------------------
// 9. determinism and replay

void criterion_9() {
  EvoEnv env;
  auto transcript = env.root.path() / "transcript.jsonl";
  auto llm_a = env.mock(env.base_script(), "c9.json", transcript);
  auto a = lineage_of(env.run("c9_a", llm_a, 2));
  auto llm_b = env.mock(env.base_script(), "c9.json");
  auto b = lineage_of(env.run("c9_b", llm_b, 2));
  expect(a == b, "two same-seed mock runs diverged");

  GatewayConfig rc;
  rc.provider = GatewayConfig::Provider::Replay;
  rc.script_path = transcript;
  Gateway replay(rc);
  auto c = lineage_of(env.run("c9_c", replay, 2));
  expect(a == c, "transcript replay did not reproduce the lineage");
}

// ---------------------------------------------------------------------------
// 10. failure containment

void criterion_10() {
  testutil::TempDir root("accept_fail");
  auto d = testutil::make_block_dataset(4, 8, 6);
  save_dataset_dir(d, root.path() / "data", 11, {"synthetic"});
  auto split = load_dataset_dir(root.path() / "data");
  ModelConfig mc;
  mc.embedding_dim = 8;
  mc.max_epochs = 5;
  mc.learning_rate = 0.05;
  mc.rng_seed = 42;

  EvolutionConfig cfg;
  cfg.limits.wall_time_limit_seconds = 5;
  EvolutionDeps deps;
  deps.split = &split;
  deps.data_dir = root.path() / "data";
  deps.run_dir = root.path() / "run";
  deps.runner_path = testutil::candidate_runner();

  EvolutionArchive archive;
  const char* faults[] = {"crash:train", "hang:train", "garbage:evaluate"};
  for (const char* fault : faults) {
    auto bad = make_seed_candidate(ModelKind::MfBpr, mc);
    bad.files["main.pipeline"] += std::string("behavior = ") + fault + "\n";
    bad.refresh_id();
    auto out = evaluate_codebase(bad, archive, cfg, deps, 1);  // must not throw
    expect(!out.ok, std::string(fault) + " unexpectedly succeeded");
    expect(!archive.contains(bad.id), std::string(fault) + " entered the archive");
  }
  expect(archive.sampleable_ids().empty(), "failed candidates became sampleable");
  bool saw_fail = false, saw_timeout = false;
  for (const auto& e : archive.events()) {
    saw_fail |= e.kind == "FAIL";
    saw_timeout |= e.kind == "TIMEOUT";
  }
  expect(saw_fail && saw_timeout, "expected both FAIL and TIMEOUT events");
}

// ---------------------------------------------------------------------------
// 11. co-evolution safety

void criterion_11() {
  EvoEnv env;
  auto entries = env.base_script();
  // the structural analysis claims a gap, and the proposed DIAG edit crashes
  for (auto& e : entries) {
    if (e["instruction_id"] == "I_ANALYZE") {
      e["reply"] = R"({"flow": "f", "modified": ["main.pipeline"],
                       "gaps": [{"component": "swap_sensitivity", "reason": "uncovered"}]})";
    }
    if (e["instruction_id"] == "I_CODE_DIAG") {
      nlohmann::json edit = {
          {"edits", nlohmann::json::array({{{"path", "main.diag"}, {"content", "probe crash\n"}}})}};
      e["reply"] = edit.dump();
    }
  }
  auto llm = env.mock(entries, "c11.json");
  auto result = env.run("c11", llm, 3);
  expect(result.archive.completed_iterations == 3,
         "co-evolution failure blocked the main loop");
  bool reverted = false;
  for (const auto& e : result.archive.events()) {
    if (e.kind == "coevolution" && e.detail.find("reverted") != std::string::npos) reverted = true;
  }
  expect(reverted, "crashing DIAG edit was not reverted");
  for (const auto& id : result.archive.sampleable_ids()) {
    expect(result.archive.entry(id).candidate.files.at("main.diag") == default_diag_source(),
           "a crashing DIAG edit survived in the archive");
  }
}

// ---------------------------------------------------------------------------
// 12. satisfaction-session accounting

void criterion_12() {
  auto d = testutil::make_block_dataset(4, 8, 6);
  auto prompts = PromptRegistry::with_builtins();
  TraitLevels levels;
  auto persona = render_persona("u00", levels, TraitVector{5, 1.0, 2});
  testutil::TempDir root("accept_sess");

  {
    auto script = root.path() / "s1.json";
    testutil::write_mock_script(
        script,
        nlohmann::json::array(
            {{{"instruction_id", "I_SESSION"},
              {"reply", R"({"viewed": ["i00"], "continue": false})"}},
             {{"instruction_id", "I_SATISFY"}, {"reply", R"({"satisfy": 8})"}}}));
    GatewayConfig gc;
    gc.provider = GatewayConfig::Provider::Mock;
    gc.script_path = script;
    Gateway llm(gc);
    Pager pager = [](int page) {
      return page == 0 ? std::vector<ItemId>{"i00", "i01"} : std::vector<ItemId>{};
    };
    auto out = simulate_session(persona, d, pager, prompts, llm, 5);
    expect(out.depth == 1, "depth must be 1");
    expect(out.view == 0.5, "view must be exactly 0.5");
    expect(out.satisfy == 8.0, "satisfy must be exactly 8.0");
  }
  {
    auto script = root.path() / "s2.json";
    testutil::write_mock_script(
        script,
        nlohmann::json::array(
            {{{"instruction_id", "I_SESSION"},
              {"reply", R"({"viewed": [], "continue": true})"}},
             {{"instruction_id", "I_SATISFY"}, {"reply", R"({"satisfy": 5})"}}}));
    GatewayConfig gc;
    gc.provider = GatewayConfig::Provider::Mock;
    gc.script_path = script;
    Gateway llm(gc);
    Pager pager = [](int) { return std::vector<ItemId>{"i00"}; };
    auto out = simulate_session(persona, d, pager, prompts, llm, 3);
    expect(out.depth == 3, "depth must never exceed max_pages");
  }
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "probe oracle equivalence", criterion_1},
      {2, "metric oracle equivalence", criterion_2},
      {3, "trait-formula fidelity", criterion_3},
      {4, "gradient check", criterion_4},
      {5, "planted-structure learning", criterion_5},
      {6, "induced-deficiency reproduction", criterion_6},
      {7, "end-to-end directional-feedback run", criterion_7},
      {8, "cache soundness", criterion_8},
      {9, "determinism and replay", criterion_9},
      {10, "failure containment", criterion_10},
      {11, "co-evolution safety", criterion_11},
      {12, "satisfaction-session accounting", criterion_12},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = true;
    double t0 = now_seconds();
    try {
      c.fn();
    } catch (const Failure& f) {
      ok = false;
      detail = f.detail;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    double elapsed = now_seconds() - t0;
    std::printf("criterion %2d: %s  %s (%.1fs)%s%s\n", c.number, ok ? "PASS" : "FAIL", c.name,
                elapsed, detail.empty() ? "" : " - ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
