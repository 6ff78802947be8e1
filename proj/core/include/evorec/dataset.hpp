#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "evorec/common.hpp"

namespace evorec {

using UserId = std::string;
using ItemId = std::string;

struct InteractionRecord {
  UserId user;
  ItemId item;
  int64_t timestamp = 0;
  double rating = 0.0;
  std::string review;
};

struct ItemAttributes {
  ItemId item;
  std::string category = "UNKNOWN";
  std::string title;
  std::optional<double> price;
  std::map<std::string, std::string> extra;
};

// Immutable after construction; per-user histories are sorted by timestamp
// with input order breaking ties.
struct Dataset {
  std::vector<UserId> users;  // insertion order of first appearance
  std::vector<ItemId> items;
  std::vector<InteractionRecord> interactions;
  std::unordered_map<ItemId, ItemAttributes> attributes;
  std::unordered_map<UserId, std::vector<size_t>> histories;  // indices into interactions
  int five_core_passes = 0;

  size_t user_index(const UserId& u) const;
  size_t item_index(const ItemId& v) const;
  const std::vector<size_t>& history(const UserId& u) const;
  bool in_history(const UserId& u, const ItemId& v) const;

  // Rebuilds users/items/histories from the interaction list.
  void reindex();
};

struct UserSplit {
  std::vector<ItemId> train;  // chronological
  ItemId validation;
  ItemId test;
  std::vector<ItemId> val_negatives;
  std::vector<ItemId> test_negatives;
  int negative_shortfall = 0;  // how far below the requested count the pool fell
};

struct SplitDataset {
  Dataset data;
  std::vector<std::pair<UserId, UserSplit>> users;  // dataset user order
  uint64_t seed = 0;
  int negatives_per_user = 99;

  const UserSplit& split_for(const UserId& u) const;
};

Dataset load_interactions(const std::filesystem::path& path);
void load_attributes(Dataset& d, const std::filesystem::path& path);

Dataset apply_five_core(const Dataset& d);

SplitDataset leave_last_out_split(const Dataset& d, uint64_t seed, int negatives = 99);

double global_average_rating(const Dataset& d, const ItemId& item);

// Persist/restore a prepared dataset directory (interactions.tsv,
// attributes.tsv, manifest.json). The split is recomputed from the recorded
// seed, which keeps it deterministic without serializing negative lists.
void save_dataset_dir(const Dataset& d, const std::filesystem::path& dir,
                      uint64_t split_seed,
                      const std::vector<std::string>& source_paths);
SplitDataset load_dataset_dir(const std::filesystem::path& dir);

}  // namespace evorec
