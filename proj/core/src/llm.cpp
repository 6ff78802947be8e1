#include "evorec/llm.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace evorec {

namespace {

const char* kSimTemplate =
    "You are acting as a specific user of a recommender system.\n"
    "Your persona:\n{persona}\n\n"
    "Your interaction history (most recent last):\n{history}\n\n"
    "The system recommends the following items:\n{recommendations}\n\n"
    "Judge every recommended item from this persona's point of view. Reply with a single JSON object:\n"
    "{\"verdicts\": [{\"item\": \"<item id>\", \"accept\": true|false, \"reason\": \"...\"}],\n"
    " \"failure_tags\": [subset of: category_mismatch, popularity_bias, low_diversity, recency_ignored, price_mismatch, other],\n"
    " \"text\": \"a short free-form critique\"}\n"
    "Every recommended item must appear exactly once in verdicts.";

const char* kSummarizeTemplate =
    "You are summarizing qualitative feedback from {n} simulated users of a recommender system.\n"
    "The individual critiques:\n{critiques}\n\n"
    "Tag prevalence (computed, do not restate numbers inconsistently):\n{prevalence}\n\n"
    "Write a concise narrative abstracting the common failure patterns. Reply with a single JSON object:\n"
    "{\"narrative\": \"...\"}";

const char* kDiagTemplate =
    "You act as a senior researcher reading raw numerical diagnostics of a recommender model.\n"
    "Raw diagnostics:\n{d_raw}\n\n"
    "Deterministic findings already derived from thresholds:\n{findings}\n\n"
    "User-simulator claims and their verification status:\n{verification}\n\n"
    "Write a short narrative interpretation. Reply with a single JSON object: {\"narrative\": \"...\"}";

const char* kPlanTemplate =
    "You plan literature research for improving a recommender codebase.\n"
    "User-simulator report:\n{r_sim}\n\nDiagnosis report:\n{r_diag}\n\n"
    "Population digest:\n{archive_digest}\n\n"
    "Propose 1-5 precise research queries, each targeted at one concrete feedback item.\n"
    "Reply with a single JSON object: {\"queries\": [{\"text\": \"...\", \"motivation\": \"...\"}]}";

const char* kReportTemplate =
    "You write a structured development report for the next evolution step of a recommender codebase.\n"
    "User-simulator report:\n{r_sim}\n\nDiagnosis report:\n{r_diag}\n\n"
    "Retrieved literature:\n{docs}\n\nPopulation digest:\n{archive_digest}\n\n"
    "Propose an ordered list of code modifications. Reply with a single JSON object:\n"
    "{\"summary\": \"...\", \"modifications\": [{\"target\": \"<file or region>\", \"description\": \"...\",\n"
    "  \"expected_effect\": \"...\", \"addresses\": \"<feedback item or empty>\"}], \"citations\": [\"doc ids\"]}";

const char* kCodeTemplate =
    "You implement the planned modifications on a recommender codebase by emitting full-file replacements.\n"
    "Development report:\n{r_dev}\n\nCurrent files:\n{files}\n\n"
    "Reply with a single JSON object: {\"edits\": [{\"path\": \"<existing relative path>\", \"content\": \"...\"}]}";

const char* kAnalyzeTemplate =
    "You analyze the structure of an evolved recommender codebase against the diagnosis tool paired with it.\n"
    "Evolved files:\n{files}\n\nCurrent diagnosis tool source:\n{diag_source}\n\n"
    "Reply with a single JSON object:\n"
    "{\"flow\": \"...\", \"added\": [], \"removed\": [], \"modified\": [], \"loss\": \"...\",\n"
    " \"gaps\": [{\"component\": \"<component present in the codebase>\", \"reason\": \"why the diagnosis tool cannot probe it\"}]}";

const char* kPlanDiagTemplate =
    "You plan literature research for extending a model diagnosis tool.\n"
    "Structural analysis of the evolved codebase:\n{analysis}\n\nUser-simulator report:\n{r_sim}\n\n"
    "Reply with a single JSON object: {\"queries\": [{\"text\": \"...\", \"motivation\": \"...\"}]}";

const char* kReportDiagTemplate =
    "You write a development report for updating a model diagnosis tool.\n"
    "Structural analysis:\n{analysis}\n\nRetrieved literature:\n{docs}\n\nUser-simulator report:\n{r_sim}\n\n"
    "Reply with a single JSON object: {\"summary\": \"...\", \"modifications\": [{\"target\": \"...\",\n"
    "  \"description\": \"...\", \"expected_effect\": \"...\", \"addresses\": \"...\"}], \"citations\": []}";

const char* kCodeDiagTemplate =
    "You update the diagnosis tool source by emitting a full-file replacement.\n"
    "Development report:\n{r_dev}\n\nCurrent diagnosis source ({diag_path}):\n{diag_source}\n\n"
    "Reply with a single JSON object: {\"edits\": [{\"path\": \"{diag_path}\", \"content\": \"...\"}]}";

const char* kSessionTemplate =
    "You are acting as a specific user browsing paged recommendations.\n"
    "Your persona:\n{persona}\n\nPage {page} shows these items:\n{items}\n\n"
    "Decide which items you would actually view and whether you keep browsing.\n"
    "Reply with a single JSON object: {\"viewed\": [\"item ids\"], \"continue\": true|false}";

const char* kSatisfyTemplate =
    "Your persona:\n{persona}\n\nYou just finished a browsing session over these pages:\n{session}\n\n"
    "On a scale from 1 to 10, how satisfied are you with the recommender overall?\n"
    "Reply with a single JSON object: {\"satisfy\": <number 1-10>}";

const char* kJudgeTemplate =
    "You are judging an evolved recommender codebase against its seed version.\n"
    "Seed source:\n{seed_source}\n\nEvolved source:\n{evolved_source}\n\n"
    "Score the evolved code on a 1-10 scale for each dimension: creativity (novel mechanisms beyond\n"
    "simple parameter tuning), explicitness (interpretability of logic flows), insight (logical intention\n"
    "to resolve specific failures), personalization (user-context awareness).\n"
    "Reply with a single JSON object: {\"creativity\": n, \"explicitness\": n, \"insight\": n,\n"
    " \"personalization\": n, \"rationale\": {\"creativity\": \"...\", \"explicitness\": \"...\",\n"
    " \"insight\": \"...\", \"personalization\": \"...\"}}";

}  // namespace

PromptRegistry PromptRegistry::with_builtins() {
  PromptRegistry r;
  auto add = [&](const char* id, const char* text, const char* schema) {
    r.register_template({id, text, schema});
  };
  add("I_SIM", kSimTemplate, "user_critique");
  add("I_SUMMARIZE", kSummarizeTemplate, "narrative");
  add("I_DIAG", kDiagTemplate, "narrative");
  add("I_PLAN", kPlanTemplate, "query_list");
  add("I_REPORT", kReportTemplate, "dev_report");
  add("I_CODE", kCodeTemplate, "edit_list");
  add("I_ANALYZE", kAnalyzeTemplate, "structural_analysis");
  add("I_PLAN_DIAG", kPlanDiagTemplate, "query_list");
  add("I_REPORT_DIAG", kReportDiagTemplate, "dev_report");
  add("I_CODE_DIAG", kCodeDiagTemplate, "edit_list");
  add("I_SESSION", kSessionTemplate, "session_page");
  add("I_SATISFY", kSatisfyTemplate, "satisfy");
  add("I_JUDGE", kJudgeTemplate, "judge_scores");
  return r;
}

void PromptRegistry::register_template(PromptTemplate t) {
  templates_[t.instruction_id] = std::move(t);
}

void PromptRegistry::load_directory(const std::filesystem::path& dir) {
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
    PromptTemplate t;
    t.instruction_id = e.path().stem().string();
    t.text = read_file(e.path());
    auto it = templates_.find(t.instruction_id);
    t.expected_output_schema = it != templates_.end() ? it->second.expected_output_schema : "";
    templates_[t.instruction_id] = std::move(t);
  }
}

const PromptTemplate& PromptRegistry::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw ConfigError("unregistered instruction id: " + id);
  return it->second;
}

bool PromptRegistry::has(const std::string& id) const { return templates_.count(id) > 0; }

std::string PromptRegistry::render(const std::string& instruction_id,
                                   const std::map<std::string, std::string>& bindings) const {
  const auto& t = get(instruction_id);
  std::string out;
  out.reserve(t.text.size());
  // Single left-to-right pass; substituted values are emitted literally, so
  // braces inside bindings never trigger recursive substitution. A brace pair
  // that does not look like an identifier placeholder is literal template text
  // (the JSON examples in the builtin templates rely on this).
  size_t i = 0;
  while (i < t.text.size()) {
    char c = t.text[i];
    if (c == '{') {
      size_t close = t.text.find('}', i + 1);
      if (close != std::string::npos) {
        std::string name = t.text.substr(i + 1, close - i - 1);
        bool identifier = !name.empty() &&
                          name.find_first_not_of(
                              "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_") ==
                              std::string::npos;
        if (identifier) {
          auto it = bindings.find(name);
          if (it == bindings.end()) {
            throw ConfigError("unbound placeholder '" + name + "' in template " + instruction_id);
          }
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += c;
    ++i;
  }
  return out;
}

Gateway::Gateway(GatewayConfig cfg) : cfg_(std::move(cfg)) {
  using clock = std::chrono::steady_clock;
  now_ = [] {
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
  };
  sleep_ = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
  if (cfg_.provider == GatewayConfig::Provider::Mock) {
    if (cfg_.script_path.empty()) throw ConfigError("mock gateway requires a script file");
    script_ = nlohmann::json::parse(read_file(cfg_.script_path));
    if (!script_.contains("entries") || !script_["entries"].is_array()) {
      throw ConfigError("mock script must contain an 'entries' array");
    }
  } else if (cfg_.provider == GatewayConfig::Provider::Replay) {
    if (cfg_.script_path.empty()) throw ConfigError("replay gateway requires a transcript file");
    replay_ = load_transcript(cfg_.script_path);
  }
}

void Gateway::set_clock_for_testing(std::function<double()> now, std::function<void(double)> sleep) {
  now_ = std::move(now);
  sleep_ = std::move(sleep);
}

std::string Gateway::mock_lookup(const ChatRequest& req) {
  auto reply_of = [](const nlohmann::json& e) {
    const auto& r = e.at("reply");
    return r.is_string() ? r.get<std::string>() : r.dump();
  };
  // Conditional entries take precedence over unconditional fallbacks.
  const nlohmann::json* fallback = nullptr;
  for (const auto& e : script_["entries"]) {
    if (e.at("instruction_id").get<std::string>() != req.instruction_id) continue;
    bool has_key = e.contains("state_key");
    bool has_sub = e.contains("prompt_contains");
    if (has_key && e["state_key"].get<std::string>() != req.state_key) continue;
    if (has_sub && req.prompt.find(e["prompt_contains"].get<std::string>()) == std::string::npos) continue;
    if (has_key || has_sub) return reply_of(e);
    if (!fallback) fallback = &e;
  }
  if (fallback) return reply_of(*fallback);
  throw MockMissError("no mock script entry for (" + req.instruction_id + ", " + req.state_key + ")");
}

std::string Gateway::replay_lookup(const ChatRequest& req) {
  std::string key = req.instruction_id + "|" + hex64(fnv1a(req.prompt));
  size_t& cur = replay_cursor_[key];
  size_t scanned = 0;
  for (size_t i = 0; i < replay_.size(); ++i) {
    const auto& e = replay_[i];
    if (e.instruction_id == req.instruction_id && e.prompt_hash == hex64(fnv1a(req.prompt))) {
      if (scanned++ == cur) {
        ++cur;
        return e.reply;
      }
    }
  }
  throw GatewayError("replay transcript has no (further) entry for " + key);
}

std::string Gateway::live_call(const std::string& prompt) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (!key || !*key) throw ConfigError("missing API key environment variable " + cfg_.api_key_env);

  nlohmann::json body;
  body["model"] = cfg_.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

  std::string err;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    rate_limit_wait();
    httplib::Client cli(cfg_.base_url);
    cli.set_connection_timeout(cfg_.timeout_seconds);
    cli.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
    auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (res && res->status == 200) {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    err = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
  }
  throw GatewayError("provider call failed after " + std::to_string(cfg_.max_retries + 1) +
                     " attempts: " + err);
}

void Gateway::rate_limit_wait() {
  if (cfg_.rate_limit_rpm <= 0) return;
  std::unique_lock lk(rate_mu_);
  while (true) {
    double now = now_();
    std::erase_if(recent_calls_, [&](double t) { return now - t >= 60.0; });
    if (static_cast<int>(recent_calls_.size()) < cfg_.rate_limit_rpm) {
      recent_calls_.push_back(now);
      return;
    }
    double oldest = recent_calls_.front();
    double wait = 60.0 - (now - oldest);
    lk.unlock();
    sleep_(wait > 0 ? wait : 0.001);
    lk.lock();
  }
}

std::string Gateway::chat_once(const ChatRequest& req) {
  double t0 = now_();
  std::string reply;
  switch (cfg_.provider) {
    case GatewayConfig::Provider::Mock:
      reply = mock_lookup(req);
      break;
    case GatewayConfig::Provider::Replay:
      reply = replay_lookup(req);
      break;
    case GatewayConfig::Provider::Live:
      reply = live_call(req.prompt);
      break;
  }
  log_call(req, reply, now_() - t0);
  return reply;
}

std::string Gateway::chat(const ChatRequest& req) {
  std::lock_guard lk(mu_);  // serializes mock cursor + transcript ordering
  return chat_once(req);
}

nlohmann::json Gateway::chat_json(const ChatRequest& req) {
  std::lock_guard lk(mu_);
  std::string last_err;
  std::string raw;
  ChatRequest attempt = req;
  for (int i = 0; i <= cfg_.max_retries; ++i) {
    raw = chat_once(attempt);
    try {
      return extract_json_object(raw);
    } catch (const ParseError& e) {
      last_err = e.what();
      attempt.prompt = req.prompt +
                       "\n\nYour previous reply could not be parsed (" + last_err +
                       "). Reply with exactly one JSON object and nothing else.";
    }
  }
  throw LlmParseError("unparseable reply for " + req.instruction_id + ": " + last_err, raw);
}

void Gateway::log_call(const ChatRequest& req, const std::string& reply, double latency) {
  ++call_index_;
  if (cfg_.transcript_path.empty()) return;
  nlohmann::json e;
  e["index"] = call_index_;
  e["instruction_id"] = req.instruction_id;
  e["state_key"] = req.state_key;
  e["prompt_hash"] = hex64(fnv1a(req.prompt));
  e["reply_hash"] = hex64(fnv1a(reply));
  e["prompt"] = req.prompt;
  e["reply"] = reply;
  e["latency_seconds"] = latency;
  if (cfg_.transcript_path.has_parent_path()) {
    std::filesystem::create_directories(cfg_.transcript_path.parent_path());
  }
  std::ofstream out(cfg_.transcript_path, std::ios::app);
  if (!out) throw Error("cannot append transcript: " + cfg_.transcript_path.string());
  out << e.dump() << "\n";
}

std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open transcript: " + p.string());
  std::vector<TranscriptEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    TranscriptEntry e;
    e.index = j.value("index", 0);
    e.instruction_id = j.at("instruction_id").get<std::string>();
    e.state_key = j.value("state_key", "");
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    e.reply_hash = j.at("reply_hash").get<std::string>();
    e.prompt = j.value("prompt", "");
    e.reply = j.at("reply").get<std::string>();
    e.latency_seconds = j.value("latency_seconds", 0.0);
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json extract_json_object(const std::string& text) {
  size_t start = text.find('{');
  while (start != std::string::npos) {
    int depth = 0;
    bool in_str = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_str) {
        if (c == '\\') ++i;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          auto candidate = text.substr(start, i - start + 1);
          auto j = nlohmann::json::parse(candidate, nullptr, false);
          if (!j.is_discarded() && j.is_object()) return j;
          break;
        }
      }
    }
    start = text.find('{', start + 1);
  }
  throw ParseError("no JSON object found in reply");
}

}  // namespace evorec
