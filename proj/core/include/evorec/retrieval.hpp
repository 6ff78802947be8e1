#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evorec/common.hpp"

namespace evorec {

struct ResearchQuery {
  std::string text;
  std::string motivation;  // the failure tag / finding it targets
};

struct RetrievedDoc {
  std::string doc_id;
  std::string title;
  std::string snippet;
  std::string source;  // "offline" | "live"
  int rank = 1;
};

struct SearchResult {
  std::vector<RetrievedDoc> docs;
  bool degraded = false;  // live backend failed; planning proceeds without docs
};

class RetrievalBackend {
 public:
  virtual ~RetrievalBackend() = default;
  // at most top_n docs for one query, ranked
  virtual SearchResult query(const ResearchQuery& q, int top_n) = 0;
};

// Directory of text documents with a manifest.json [{doc_id, title, file}].
// TF-weighted token-overlap scoring; deterministic.
class OfflineCorpusBackend : public RetrievalBackend {
 public:
  explicit OfflineCorpusBackend(const std::filesystem::path& corpus_dir);
  SearchResult query(const ResearchQuery& q, int top_n) override;

 private:
  struct Doc {
    std::string doc_id;
    std::string title;
    std::string text;
  };
  std::vector<Doc> docs_;
};

// Single HTTP search endpoint: GET <base_url>/search?q=... returning
// {"results": [{"doc_id", "title", "snippet"}]}. Failures degrade to an
// empty result with the warning flag set.
class LiveSearchBackend : public RetrievalBackend {
 public:
  explicit LiveSearchBackend(std::string base_url, int timeout_seconds = 10);
  SearchResult query(const ResearchQuery& q, int top_n) override;

 private:
  std::string base_url_;
  int timeout_seconds_;
};

// Merged, deduplicated by doc_id, at most top_n per query.
SearchResult search(const std::vector<ResearchQuery>& queries, int top_n,
                    RetrievalBackend& backend);

std::vector<std::string> tokenize_lower(const std::string& text);

}  // namespace evorec
