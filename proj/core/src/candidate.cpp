#include "evorec/candidate.hpp"

#include <chrono>
#include <thread>

namespace evorec {

std::string CandidateCodebase::compute_id(const std::map<std::string, std::string>& files) {
  // std::map iterates in sorted path order, so the hash is independent of how
  // the map was populated.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [path, content] : files) {
    h = fnv1a(path, h);
    h = fnv1a(std::string(1, '\0'), h);
    h = fnv1a(content, h);
    h = fnv1a(std::string(1, '\0'), h);
  }
  return hex64(h);
}

namespace {

std::string find_unique_entrypoint(const std::map<std::string, std::string>& files,
                                   const std::string& ext, const char* what) {
  std::string found;
  for (const auto& [path, _] : files) {
    if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
      if (!found.empty()) throw DataError(std::string("multiple ") + what + " entrypoints");
      found = path;
    }
  }
  if (found.empty()) throw DataError(std::string("missing ") + what + " entrypoint");
  return found;
}

}  // namespace

std::string CandidateCodebase::pipeline_entrypoint() const {
  return find_unique_entrypoint(files, ".pipeline", "pipeline");
}

std::string CandidateCodebase::diag_entrypoint() const {
  return find_unique_entrypoint(files, ".diag", "diagnosis");
}

PipelineSpec PipelineSpec::parse(const std::string& source) {
  PipelineSpec spec;
  size_t line_no = 0;
  for (const auto& raw : split(source, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("pipeline line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "model") spec.model = model_kind_from_string(value);
    else if (key == "embedding_dim") spec.config.embedding_dim = std::stoi(value);
    else if (key == "epochs") spec.config.max_epochs = std::stoi(value);
    else if (key == "learning_rate") spec.config.learning_rate = std::stod(value);
    else if (key == "batch_size") spec.config.batch_size = std::stoi(value);
    else if (key == "max_sequence_length") spec.config.max_sequence_length = std::stoi(value);
    else if (key == "patience") spec.config.patience = std::stoi(value);
    else if (key == "positional") spec.config.positional = (value == "on" || value == "true");
    else if (key == "behavior") spec.behavior = value;
    else throw ParseError("pipeline line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  spec.config.validate();
  return spec;
}

double ProbeSpec::param_d(const std::string& key, double dflt) const {
  auto it = params.find(key);
  return it == params.end() ? dflt : std::stod(it->second);
}

int ProbeSpec::param_i(const std::string& key, int dflt) const {
  auto it = params.find(key);
  return it == params.end() ? dflt : std::stoi(it->second);
}

DiagSpec DiagSpec::parse(const std::string& source) {
  DiagSpec spec;
  size_t line_no = 0;
  for (const auto& raw : split(source, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto tokens = split(line, ' ');
    if (tokens[0] != "probe" || tokens.size() < 2) {
      throw ParseError("diag line " + std::to_string(line_no) + ": expected 'probe <name> [k=v ...]'");
    }
    ProbeSpec p;
    p.name = tokens[1];
    for (size_t i = 2; i < tokens.size(); ++i) {
      if (tokens[i].empty()) continue;
      auto eq = tokens[i].find('=');
      if (eq == std::string::npos) {
        throw ParseError("diag line " + std::to_string(line_no) + ": malformed parameter '" +
                         tokens[i] + "'");
      }
      p.params[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
    if (p.params.count("warn") && p.params.count("critical")) {
      ProbeThreshold t;
      t.warn = p.param_d("warn", 0);
      t.critical = p.param_d("critical", 0);
      t.high_is_bad = p.param_i("high_is_bad", 1) != 0;
      p.threshold = t;
    }
    spec.probes.push_back(std::move(p));
  }
  return spec;
}

std::map<std::string, ProbeThreshold> DiagSpec::thresholds() const {
  std::map<std::string, ProbeThreshold> out;
  for (const auto& p : probes) {
    if (p.threshold) out[p.name] = *p.threshold;
  }
  return out;
}

std::string default_diag_source() {
  return "# seed diagnosis tool\n"
         "probe embedding_collapse sample_size=512 seed=7 warn=0.8 critical=0.9 high_is_bad=1\n"
         "probe ranking_margin low_fraction=0.05 warn=0.0 critical=-0.5 high_is_bad=0\n"
         "probe swap_sensitivity k=10 warn=0.01 critical=0.001 high_is_bad=0\n";
}

CandidateCodebase make_seed_candidate(ModelKind kind, const ModelConfig& cfg) {
  CandidateCodebase c;
  std::string p;
  p += "model = " + to_string(kind) + "\n";
  p += "embedding_dim = " + std::to_string(cfg.embedding_dim) + "\n";
  p += "epochs = " + std::to_string(cfg.max_epochs) + "\n";
  p += "learning_rate = " + format_double(cfg.learning_rate) + "\n";
  p += "batch_size = " + std::to_string(cfg.batch_size) + "\n";
  p += "max_sequence_length = " + std::to_string(cfg.max_sequence_length) + "\n";
  p += "patience = " + std::to_string(cfg.patience) + "\n";
  p += std::string("positional = ") + (cfg.positional ? "on" : "off") + "\n";
  c.files["main.pipeline"] = p;
  c.files["main.diag"] = default_diag_source();
  c.provenance = "seed";
  c.refresh_id();
  return c;
}

namespace {

void apply_fault_directive(const std::string& behavior, const std::string& phase,
                           const std::filesystem::path& out_dir, bool* emit_garbage) {
  *emit_garbage = false;
  auto sep = behavior.find(':');
  if (sep == std::string::npos) return;
  if (behavior.substr(sep + 1) != phase) return;
  auto kind = behavior.substr(0, sep);
  if (kind == "crash") throw Error("pipeline fault directive: crash in phase " + phase);
  if (kind == "hang") {
    while (true) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (kind == "garbage") *emit_garbage = true;
}

struct RunnerConfig {
  uint64_t rng_seed = 42;
  std::string eval_phase = "validation";
  std::filesystem::path artifacts_dir;
};

RunnerConfig load_runner_config(const std::filesystem::path& file) {
  RunnerConfig c;
  auto j = nlohmann::json::parse(read_file(file));
  c.rng_seed = j.value("rng_seed", uint64_t{42});
  c.eval_phase = j.value("eval_phase", std::string("validation"));
  if (j.contains("artifacts_dir")) c.artifacts_dir = j["artifacts_dir"].get<std::string>();
  return c;
}

std::vector<MarginRow> build_margin_rows(const TrainedModel& model, const SplitDataset& split,
                                         uint64_t seed) {
  std::vector<MarginRow> rows;
  for (const auto& [u, s] : split.users) {
    const auto& hist = split.data.history(u);
    std::unordered_set<ItemId> hist_items;
    for (size_t idx : hist) hist_items.insert(split.data.interactions[idx].item);
    std::vector<ItemId> pool;
    for (const auto& v : split.data.items)
      if (!hist_items.count(v)) pool.push_back(v);
    if (pool.empty()) continue;
    std::vector<ItemId> prefix;
    for (size_t idx : hist) {
      const ItemId& v = split.data.interactions[idx].item;
      Rng rng(mix_seed(mix_seed(seed, u), v));
      const ItemId& neg = pool[rng.index(pool.size())];
      MarginRow row;
      row.user = u;
      row.positive = v;
      row.positive_logit = model.score(u, prefix, v);
      row.negative_logit = model.score(u, prefix, neg);
      rows.push_back(std::move(row));
      prefix.push_back(v);
    }
  }
  return rows;
}

}  // namespace

nlohmann::json compute_d_raw(const DiagSpec& diag, const TrainedModel& model,
                             const SplitDataset& split, uint64_t seed) {
  std::vector<ProbeResult> results;
  ContextScorer scorer = [&](const std::vector<ItemId>& ctx, const std::vector<ItemId>& cands) {
    // MF models have no context pathway; score for a fixed reference user so
    // the probe still gets deterministic logits.
    const UserId& u = model.kind == ModelKind::MfBpr ? model.users.front() : UserId{};
    return score_candidates(model, u, ctx, cands);
  };
  std::vector<std::vector<ItemId>> sequences;
  for (const auto& [u, s] : split.users) {
    if (s.train.size() >= 2) sequences.push_back(s.train);
  }
  for (const auto& p : diag.probes) {
    if (p.name == "embedding_collapse") {
      results.push_back(probe_embedding_collapse(
          model.item_emb, static_cast<size_t>(p.param_i("sample_size", 512)),
          static_cast<uint64_t>(p.param_i("seed", 7))));
    } else if (p.name == "ranking_margin") {
      auto rows = build_margin_rows(model, split, seed);
      results.push_back(probe_ranking_margin(rows, split.data.attributes,
                                             p.param_d("low_fraction", 0.05)));
    } else if (p.name == "swap_sensitivity") {
      results.push_back(probe_swap_sensitivity(scorer, sequences, model.items, p.param_i("k", 10)));
    } else if (p.name == "diversity") {
      results.push_back(probe_recommendation_diversity(scorer, sequences, model.items,
                                                       split.data.attributes, p.param_i("k", 10)));
    } else if (p.name == "crash") {
      throw Error("diagnosis probe 'crash' executed");
    } else {
      throw Error("unknown probe: " + p.name);
    }
  }
  return assemble_d_raw(results);
}

int run_candidate_phase(const RunnerArgs& args) {
  auto t0 = std::chrono::steady_clock::now();
  auto out_manifest = args.out_dir / "manifest";
  std::filesystem::create_directories(args.out_dir);
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    auto pipeline = PipelineSpec::parse(read_file(args.entrypoint));
    auto cfg = load_runner_config(args.config_file);
    pipeline.config.rng_seed = cfg.rng_seed;

    bool garbage = false;
    apply_fault_directive(pipeline.behavior, args.phase, args.out_dir, &garbage);
    if (garbage) {
      write_file(out_manifest, "}} this is not a manifest {{\n");
      return 0;
    }

    nlohmann::json m;
    m["phase"] = args.phase;
    if (args.phase == "train") {
      auto split = load_dataset_dir(args.data_dir);
      TrainedModel model = pipeline.model == ModelKind::MfBpr
                               ? train_mf_bpr(split, pipeline.config)
                               : train_sequential_attention(split, pipeline.config);
      export_artifacts(model, split, args.out_dir);
      m["status"] = "OK";
      m["artifacts"] = {{"model_dir", args.out_dir.string()}};
    } else if (args.phase == "evaluate") {
      auto split = load_dataset_dir(args.data_dir);
      auto model = load_model(cfg.artifacts_dir);
      auto report = evaluate_model(model, split, cfg.eval_phase);
      m["status"] = "OK";
      m["metrics"] = metric_report_to_json(report);
    } else if (args.phase == "diagnose") {
      auto split = load_dataset_dir(args.data_dir);
      auto model = load_model(cfg.artifacts_dir);
      auto diag_path = args.entrypoint.parent_path() / "main.diag";
      // the diag entrypoint sits next to the pipeline entrypoint; find it
      for (const auto& e : std::filesystem::directory_iterator(args.entrypoint.parent_path())) {
        if (e.path().extension() == ".diag") diag_path = e.path();
      }
      auto diag = DiagSpec::parse(read_file(diag_path));
      m["status"] = "OK";
      m["d_raw"] = compute_d_raw(diag, model, split, cfg.rng_seed);
    } else {
      throw ConfigError("unknown phase: " + args.phase);
    }
    m["wall_time"] = elapsed();
    write_file(out_manifest, m.dump(2) + "\n");
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json m;
    m["phase"] = args.phase;
    m["status"] = "FAIL";
    m["failure_log"] = e.what();
    m["wall_time"] = elapsed();
    try {
      write_file(out_manifest, m.dump(2) + "\n");
    } catch (...) {
    }
    fprintf(stderr, "candidate phase %s failed: %s\n", args.phase.c_str(), e.what());
    return 1;
  }
}

}  // namespace evorec
