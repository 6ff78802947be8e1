#pragma once

// Shared fixtures for the test and acceptance binaries.

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evorec/common.hpp"
#include "evorec/dataset.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("evorec_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string id2(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

// Two-block dataset: users in block b only ever interact with items of block
// b. MF separates the blocks easily, so held-out hits are near-certain.
inline evorec::Dataset make_block_dataset(int users_per_block = 20, int items_per_block = 20,
                                          int interactions_per_user = 18) {
  evorec::Dataset d;
  int64_t ts = 0;
  for (int b = 0; b < 2; ++b) {
    for (int u = 0; u < users_per_block; ++u) {
      evorec::UserId uid = id2("u", b * users_per_block + u);
      for (int j = 0; j < interactions_per_user; ++j) {
        // stride walk so different users cover different item subsets
        int item = (u + j * (1 + u % 3)) % items_per_block;
        evorec::InteractionRecord r;
        r.user = uid;
        r.item = id2("i", b * items_per_block + item);
        r.timestamp = ++ts;
        r.rating = 3.0 + (j % 3);
        // stride can revisit an item; keep the first visit only
        bool dup = false;
        for (const auto& prev : d.interactions) {
          if (prev.user == r.user && prev.item == r.item) {
            dup = true;
            break;
          }
        }
        if (!dup) d.interactions.push_back(std::move(r));
      }
    }
  }
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < items_per_block; ++i) {
      evorec::ItemAttributes a;
      a.item = id2("i", b * items_per_block + i);
      a.category = b == 0 ? "alpha" : "beta";
      a.title = "item " + a.item;
      d.attributes[a.item] = a;
    }
  }
  d.reindex();
  return d;
}

// Order-sensitive chain dataset: each user's history is a batch of random
// decoy items followed by a run of cyclic successors (i, i+1, i+2, ...). The
// held-out items continue the run, so the continuation is predictable from
// the identity of the most recent item but not from the visited set alone:
// an order-blind model cannot tell the run apart from the decoys.
inline evorec::Dataset make_chain_dataset(int n_users = 30, int n_items = 40, int walk_len = 13) {
  evorec::Dataset d;
  int64_t ts = 0;
  int run_len = walk_len / 2 + 1;
  int n_decoys = walk_len - run_len;
  for (int u = 0; u < n_users; ++u) {
    evorec::Rng rng(1000 + static_cast<uint64_t>(u));
    std::vector<char> used(n_items, 0);
    int start = (u * 11) % n_items;
    for (int j = 0; j < run_len; ++j) used[(start + j) % n_items] = 1;
    std::vector<int> walk;
    for (int j = 0; j < n_decoys; ++j) {
      int item;
      do {
        item = static_cast<int>(rng.index(n_items));
      } while (used[item]);
      used[item] = 1;
      walk.push_back(item);
    }
    for (int j = 0; j < run_len; ++j) walk.push_back((start + j) % n_items);
    for (int item : walk) {
      evorec::InteractionRecord r;
      r.user = id2("u", u);
      r.item = id2("i", item);
      r.timestamp = ++ts;
      r.rating = 4.0;
      d.interactions.push_back(std::move(r));
    }
  }
  for (int i = 0; i < n_items; ++i) {
    evorec::ItemAttributes a;
    a.item = id2("i", i);
    a.category = i % 2 == 0 ? "even" : "odd";
    a.title = "item " + a.item;
    d.attributes[a.item] = a;
  }
  d.reindex();
  return d;
}

inline void write_mock_script(const fs::path& file, const nlohmann::json& entries) {
  nlohmann::json j;
  j["entries"] = entries;
  evorec::write_file(file, j.dump(2) + "\n");
}

inline fs::path candidate_runner() {
  const char* env = std::getenv("EVOREC_CANDIDATE_BIN");
  if (env && *env) return env;
  return "evorec-candidate";
}

}  // namespace testutil
