#include "evorec/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <httplib.h>
#include <json.hpp>

namespace evorec {

std::vector<std::string> tokenize_lower(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

OfflineCorpusBackend::OfflineCorpusBackend(const std::filesystem::path& corpus_dir) {
  auto manifest = nlohmann::json::parse(read_file(corpus_dir / "manifest.json"));
  for (const auto& e : manifest) {
    Doc d;
    d.doc_id = e.at("doc_id").get<std::string>();
    d.title = e.at("title").get<std::string>();
    d.text = read_file(corpus_dir / e.at("file").get<std::string>());
    docs_.push_back(std::move(d));
  }
}

SearchResult OfflineCorpusBackend::query(const ResearchQuery& q, int top_n) {
  if (q.text.empty()) throw Error("empty research query");
  auto q_tokens = tokenize_lower(q.text);
  std::set<std::string> q_set(q_tokens.begin(), q_tokens.end());
  std::vector<std::pair<double, size_t>> scored;
  for (size_t i = 0; i < docs_.size(); ++i) {
    std::map<std::string, int> tf;
    for (const auto& t : tokenize_lower(docs_[i].title + " " + docs_[i].text)) tf[t]++;
    double score = 0;
    for (const auto& t : q_set) {
      auto it = tf.find(t);
      if (it != tf.end()) score += it->second;
    }
    if (score > 0) scored.emplace_back(score, i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return docs_[a.second].doc_id < docs_[b.second].doc_id;
  });
  SearchResult r;
  for (size_t i = 0; i < scored.size() && i < static_cast<size_t>(top_n); ++i) {
    const auto& d = docs_[scored[i].second];
    RetrievedDoc rd;
    rd.doc_id = d.doc_id;
    rd.title = d.title;
    rd.snippet = d.text.substr(0, 400);
    rd.source = "offline";
    rd.rank = static_cast<int>(i) + 1;
    r.docs.push_back(std::move(rd));
  }
  return r;
}

LiveSearchBackend::LiveSearchBackend(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

SearchResult LiveSearchBackend::query(const ResearchQuery& q, int top_n) {
  SearchResult r;
  try {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(timeout_seconds_);
    cli.set_read_timeout(timeout_seconds_);
    httplib::Params params{{"q", q.text}, {"n", std::to_string(top_n)}};
    auto res = cli.Get("/search", params, httplib::Headers{});
    if (!res || res->status != 200) {
      r.degraded = true;
      return r;
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("results")) {
      r.degraded = true;
      return r;
    }
    int rank = 1;
    for (const auto& e : j["results"]) {
      if (rank > top_n) break;
      RetrievedDoc rd;
      rd.doc_id = e.value("doc_id", "");
      rd.title = e.value("title", "");
      rd.snippet = e.value("snippet", "");
      rd.source = "live";
      rd.rank = rank++;
      r.docs.push_back(std::move(rd));
    }
  } catch (const std::exception&) {
    r.degraded = true;
  }
  return r;
}

SearchResult search(const std::vector<ResearchQuery>& queries, int top_n,
                    RetrievalBackend& backend) {
  if (top_n < 1) throw Error("search: top_n must be >= 1");
  SearchResult merged;
  std::set<std::string> seen;
  for (const auto& q : queries) {
    auto r = backend.query(q, top_n);
    merged.degraded = merged.degraded || r.degraded;
    for (auto& d : r.docs) {
      if (seen.insert(d.doc_id).second) merged.docs.push_back(std::move(d));
    }
  }
  for (size_t i = 0; i < merged.docs.size(); ++i) merged.docs[i].rank = static_cast<int>(i) + 1;
  return merged;
}

}  // namespace evorec
