#include "evorec/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

namespace evorec {

std::vector<UserId> sample_users(const Dataset& d, size_t n, uint64_t seed) {
  if (n > d.users.size()) {
    throw Error("sample_users: requested " + std::to_string(n) + " of " +
                std::to_string(d.users.size()) + " users");
  }
  Rng rng(seed);
  auto picks = rng.sample_without_replacement(d.users.size(), n);
  std::sort(picks.begin(), picks.end());  // dataset order, deterministic per seed
  std::vector<UserId> out;
  out.reserve(n);
  for (size_t p : picks) out.push_back(d.users[p]);
  return out;
}

namespace {

std::string describe_items(const Dataset& d, const std::vector<ItemId>& items) {
  std::string s;
  for (const auto& v : items) {
    auto it = d.attributes.find(v);
    s += "- " + v;
    if (it != d.attributes.end()) {
      s += " | category: " + it->second.category;
      if (!it->second.title.empty()) s += " | title: " + it->second.title;
      if (it->second.price) s += " | price: " + format_double(*it->second.price);
    }
    s += "\n";
  }
  return s;
}

std::optional<UserCritique> parse_critique(const UserId& user, const nlohmann::json& j,
                                           const std::vector<ItemId>& recs) {
  UserCritique c;
  c.user = user;
  if (!j.contains("verdicts") || !j["verdicts"].is_array()) return std::nullopt;
  std::map<ItemId, ItemVerdict> by_item;
  for (const auto& v : j["verdicts"]) {
    ItemVerdict iv;
    if (!v.contains("item") || !v.contains("accept")) return std::nullopt;
    iv.item = v["item"].get<std::string>();
    iv.accept = v["accept"].get<bool>();
    iv.reason = v.value("reason", "");
    by_item[iv.item] = iv;
  }
  for (const auto& r : recs) {
    auto it = by_item.find(r);
    if (it == by_item.end()) return std::nullopt;  // every item needs exactly one verdict
    c.verdicts.push_back(it->second);
  }
  if (j.contains("failure_tags")) {
    for (const auto& t : j["failure_tags"]) {
      std::string tag = t.get<std::string>();
      if (!is_known_failure_tag(tag)) return std::nullopt;
      c.failure_tags.push_back(tag);
    }
  }
  c.free_text = j.value("text", "");
  return c;
}

}  // namespace

UserCritique critique_user(const Persona& p, const Dataset& d,
                           const std::vector<ItemId>& history,
                           const std::vector<ItemId>& recommendations,
                           const PromptRegistry& prompts, Gateway& llm) {
  if (recommendations.empty()) throw Error("critique_user: empty recommendation list");
  ChatRequest req;
  req.instruction_id = "I_SIM";
  req.state_key = p.user;
  req.prompt = prompts.render("I_SIM", {{"persona", p.description},
                                        {"history", describe_items(d, history)},
                                        {"recommendations", describe_items(d, recommendations)}});
  std::string last_raw;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      auto j = llm.chat_json(req);
      last_raw = j.dump();
      if (auto c = parse_critique(p.user, j, recommendations)) return *c;
    } catch (const LlmParseError& e) {
      last_raw = e.raw_reply;
    }
    req.prompt += "\n\nYour previous reply was incomplete: every recommended item needs exactly one "
                  "verdict and tags must come from the closed vocabulary.";
  }
  UserCritique c;
  c.user = p.user;
  c.fallback = true;
  c.failure_tags = {"other"};
  c.free_text = last_raw;
  for (const auto& r : recommendations) c.verdicts.push_back({r, false, "unparseable critique"});
  return c;
}

SimulatorReport summarize_reports(const std::vector<UserCritique>& critiques,
                                  const PromptRegistry& prompts, Gateway& llm) {
  if (critiques.empty()) throw Error("summarize_reports: no critiques");
  std::map<std::string, int> counts;
  std::map<std::string, std::vector<std::string>> quotes;
  for (const auto& c : critiques) {
    for (const auto& t : c.failure_tags) {
      counts[t]++;
      if (quotes[t].size() < 3 && !c.free_text.empty()) quotes[t].push_back(c.free_text);
    }
  }
  SimulatorReport r;
  r.sample_size = static_cast<int>(critiques.size());
  for (const auto& [tag, n] : counts) {
    FailurePattern fp;
    fp.tag = tag;
    fp.prevalence = static_cast<double>(n) / static_cast<double>(critiques.size());
    fp.quotes = quotes[tag];
    r.common_failures.push_back(std::move(fp));
  }
  std::stable_sort(r.common_failures.begin(), r.common_failures.end(),
                   [](const auto& a, const auto& b) { return a.prevalence > b.prevalence; });

  std::string critique_text, prevalence_text;
  for (const auto& c : critiques) critique_text += critique_to_json(c).dump() + "\n";
  for (const auto& f : r.common_failures) {
    prevalence_text += f.tag + ": " + format_double(f.prevalence) + "\n";
  }
  ChatRequest req;
  req.instruction_id = "I_SUMMARIZE";
  req.prompt = prompts.render("I_SUMMARIZE", {{"n", std::to_string(critiques.size())},
                                              {"critiques", critique_text},
                                              {"prevalence", prevalence_text}});
  try {
    auto j = llm.chat_json(req);
    r.narrative = j.value("narrative", j.dump());
  } catch (const LlmParseError& e) {
    r.narrative = e.raw_reply;
  }
  return r;
}

SimulatorReport run_simulator(const Dataset& d, const std::map<UserId, Persona>& personas,
                              const std::function<std::vector<ItemId>(const UserId&)>& recommender,
                              size_t n_users, uint64_t seed, const PromptRegistry& prompts,
                              Gateway& llm, int concurrency,
                              std::vector<UserCritique>* critiques_out) {
  auto users = sample_users(d, std::min(n_users, d.users.size()), seed);
  std::vector<UserCritique> critiques(users.size());
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= users.size()) return;
      try {
        const auto& u = users[i];
        std::vector<ItemId> history;
        for (size_t idx : d.history(u)) history.push_back(d.interactions[idx].item);
        critiques[i] = critique_user(personas.at(u), d, history, recommender(u), prompts, llm);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  size_t n_threads = std::min<size_t>(std::max(concurrency, 1), users.size());
  std::vector<std::thread> threads;
  for (size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  if (critiques_out) *critiques_out = critiques;
  return summarize_reports(critiques, prompts, llm);
}

SessionOutcome simulate_session(const Persona& p, const Dataset& d, const Pager& pager,
                                const PromptRegistry& prompts, Gateway& llm, int max_pages) {
  if (max_pages < 1) throw Error("simulate_session: max_pages must be >= 1");
  int shown = 0, viewed = 0, depth = 0;
  std::string session_log;
  for (int page = 0; page < max_pages; ++page) {
    auto items = pager(page);
    if (items.empty()) break;  // pager exhausted
    ++depth;
    shown += static_cast<int>(items.size());
    ChatRequest req;
    req.instruction_id = "I_SESSION";
    req.state_key = p.user + ":" + std::to_string(page);
    req.prompt = prompts.render("I_SESSION", {{"persona", p.description},
                                              {"page", std::to_string(page + 1)},
                                              {"items", describe_items(d, items)}});
    auto j = llm.chat_json(req);
    std::vector<std::string> viewed_items;
    if (j.contains("viewed")) viewed_items = j["viewed"].get<std::vector<std::string>>();
    for (const auto& v : viewed_items) {
      if (std::find(items.begin(), items.end(), v) != items.end()) ++viewed;
    }
    session_log += "page " + std::to_string(page + 1) + ": viewed " +
                   std::to_string(viewed_items.size()) + " of " + std::to_string(items.size()) + "\n";
    if (!j.value("continue", false)) break;
  }
  if (depth == 0) depth = 1;  // a session always counts its first (possibly empty) page view
  ChatRequest req;
  req.instruction_id = "I_SATISFY";
  req.state_key = p.user;
  req.prompt = prompts.render("I_SATISFY", {{"persona", p.description}, {"session", session_log}});
  auto j = llm.chat_json(req);
  SessionOutcome out;
  out.depth = depth;
  out.view = shown > 0 ? static_cast<double>(viewed) / shown : 0.0;
  double s = j.contains("satisfy") && j["satisfy"].is_number() ? j["satisfy"].get<double>() : 1.0;
  out.satisfy = std::clamp(s, 1.0, 10.0);
  return out;
}

}  // namespace evorec
