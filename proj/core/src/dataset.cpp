#include "evorec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace evorec {

namespace {

double parse_rating(const std::string& s, size_t line_no) {
  double r = 0;
  try {
    size_t pos = 0;
    r = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": malformed rating '" + s + "'");
  }
  if (r < 1.0 || r > 5.0) {
    throw ParseError("line " + std::to_string(line_no) + ": rating out of range [1,5]: " + s);
  }
  return r;
}

int64_t parse_timestamp(const std::string& s, size_t line_no) {
  try {
    size_t pos = 0;
    long long t = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    if (t < 0) throw std::invalid_argument("negative");
    return t;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": malformed timestamp '" + s + "'");
  }
}

}  // namespace

size_t Dataset::user_index(const UserId& u) const {
  for (size_t i = 0; i < users.size(); ++i)
    if (users[i] == u) return i;
  throw DataError("unknown user: " + u);
}

size_t Dataset::item_index(const ItemId& v) const {
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i] == v) return i;
  throw DataError("unknown item: " + v);
}

const std::vector<size_t>& Dataset::history(const UserId& u) const {
  auto it = histories.find(u);
  if (it == histories.end()) throw DataError("unknown user: " + u);
  return it->second;
}

bool Dataset::in_history(const UserId& u, const ItemId& v) const {
  auto it = histories.find(u);
  if (it == histories.end()) return false;
  for (size_t idx : it->second)
    if (interactions[idx].item == v) return true;
  return false;
}

void Dataset::reindex() {
  users.clear();
  items.clear();
  histories.clear();
  std::unordered_set<std::string> seen_user, seen_item;
  for (size_t i = 0; i < interactions.size(); ++i) {
    const auto& r = interactions[i];
    if (seen_user.insert(r.user).second) users.push_back(r.user);
    if (seen_item.insert(r.item).second) items.push_back(r.item);
    histories[r.user].push_back(i);
  }
  // Histories sorted by timestamp, stable on input order for ties.
  for (auto& [u, idxs] : histories) {
    std::stable_sort(idxs.begin(), idxs.end(), [this](size_t a, size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
  }
  // Every history item must have attributes; missing ones get the sentinel.
  for (const auto& r : interactions) {
    if (!attributes.count(r.item)) {
      ItemAttributes a;
      a.item = r.item;
      attributes[r.item] = a;
    }
  }
}

Dataset load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path.string());
  Dataset d;
  std::string line;
  size_t line_no = 0;
  size_t duplicates = 0;
  std::set<std::tuple<UserId, ItemId, int64_t>> keys;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 4 || fields.size() > 5) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4-5 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    InteractionRecord r;
    r.user = fields[0];
    r.item = fields[1];
    if (r.user.empty() || r.item.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty user or item id");
    }
    r.timestamp = parse_timestamp(fields[2], line_no);
    r.rating = parse_rating(fields[3], line_no);
    if (fields.size() == 5) r.review = fields[4];
    if (!keys.insert({r.user, r.item, r.timestamp}).second) {
      ++duplicates;
      continue;
    }
    d.interactions.push_back(std::move(r));
  }
  if (duplicates > 0) {
    throw DataError("rejected " + std::to_string(duplicates) + " duplicate (user,item,timestamp) records");
  }
  d.reindex();
  return d;
}

void load_attributes(Dataset& d, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attributes file: " + path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 3) {
      throw ParseError("attributes line " + std::to_string(line_no) + ": expected >=3 fields");
    }
    ItemAttributes a;
    a.item = fields[0];
    a.category = fields[1].empty() ? "UNKNOWN" : fields[1];
    a.title = fields[2];
    if (fields.size() >= 4 && !fields[3].empty()) {
      double p = std::stod(fields[3]);
      if (p < 0) throw ParseError("attributes line " + std::to_string(line_no) + ": negative price");
      a.price = p;
    }
    d.attributes[a.item] = std::move(a);
  }
  // Re-apply the UNKNOWN sentinel for items still missing.
  for (const auto& r : d.interactions) {
    if (!d.attributes.count(r.item)) {
      ItemAttributes a;
      a.item = r.item;
      d.attributes[r.item] = a;
    }
  }
}

Dataset apply_five_core(const Dataset& d) {
  Dataset out = d;
  int passes = 0;
  while (true) {
    std::unordered_map<UserId, int> ucount;
    std::unordered_map<ItemId, int> icount;
    for (const auto& r : out.interactions) {
      ucount[r.user]++;
      icount[r.item]++;
    }
    std::vector<InteractionRecord> kept;
    kept.reserve(out.interactions.size());
    for (const auto& r : out.interactions) {
      if (ucount[r.user] >= 5 && icount[r.item] >= 5) kept.push_back(r);
    }
    ++passes;
    bool changed = kept.size() != out.interactions.size();
    out.interactions = std::move(kept);
    if (!changed) break;
  }
  out.reindex();
  out.five_core_passes = d.five_core_passes + passes;
  return out;
}

const UserSplit& SplitDataset::split_for(const UserId& u) const {
  for (const auto& [uid, s] : users)
    if (uid == u) return s;
  throw DataError("no split for user: " + u);
}

SplitDataset leave_last_out_split(const Dataset& d, uint64_t seed, int negatives) {
  SplitDataset sd;
  sd.data = d;
  sd.seed = seed;
  sd.negatives_per_user = negatives;
  for (const auto& u : d.users) {
    const auto& hist = d.history(u);
    if (hist.size() < 3) {
      throw DataError("user " + u + " has fewer than 3 interactions; split requires a five-core dataset");
    }
    UserSplit s;
    for (size_t i = 0; i + 2 < hist.size(); ++i) s.train.push_back(d.interactions[hist[i]].item);
    s.validation = d.interactions[hist[hist.size() - 2]].item;
    s.test = d.interactions[hist[hist.size() - 1]].item;

    // Candidate pool: catalog minus the user's full history, in catalog order.
    std::unordered_set<ItemId> hist_items;
    for (size_t idx : hist) hist_items.insert(d.interactions[idx].item);
    std::vector<ItemId> pool;
    for (const auto& v : d.items)
      if (!hist_items.count(v)) pool.push_back(v);

    size_t want = static_cast<size_t>(negatives);
    size_t take = std::min(want, pool.size());
    s.negative_shortfall = static_cast<int>(want - take);
    for (int phase = 0; phase < 2; ++phase) {
      Rng rng(mix_seed(mix_seed(seed, u), static_cast<uint64_t>(phase)));
      auto picks = rng.sample_without_replacement(pool.size(), take);
      auto& dst = phase == 0 ? s.val_negatives : s.test_negatives;
      dst.reserve(take);
      for (size_t p : picks) dst.push_back(pool[p]);
    }
    sd.users.emplace_back(u, std::move(s));
  }
  return sd;
}

double global_average_rating(const Dataset& d, const ItemId& item) {
  double sum = 0;
  size_t n = 0;
  for (const auto& r : d.interactions) {
    if (r.item == item) {
      sum += r.rating;
      ++n;
    }
  }
  if (n == 0) throw DataError("unknown item or no interactions: " + item);
  return sum / static_cast<double>(n);
}

void save_dataset_dir(const Dataset& d, const std::filesystem::path& dir,
                      uint64_t split_seed,
                      const std::vector<std::string>& source_paths) {
  std::filesystem::create_directories(dir);
  std::string inter;
  for (const auto& r : d.interactions) {
    inter += r.user + "\t" + r.item + "\t" + std::to_string(r.timestamp) + "\t" +
             format_double(r.rating) + "\t" + r.review + "\n";
  }
  write_file(dir / "interactions.tsv", inter);
  std::string attr;
  for (const auto& v : d.items) {
    const auto& a = d.attributes.at(v);
    attr += a.item + "\t" + a.category + "\t" + a.title + "\t" +
            (a.price ? format_double(*a.price) : "") + "\n";
  }
  write_file(dir / "attributes.tsv", attr);
  nlohmann::json m;
  m["split_seed"] = split_seed;
  m["five_core_passes"] = d.five_core_passes;
  m["sources"] = source_paths;
  m["n_users"] = d.users.size();
  m["n_items"] = d.items.size();
  m["n_interactions"] = d.interactions.size();
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

SplitDataset load_dataset_dir(const std::filesystem::path& dir) {
  auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  Dataset d = load_interactions(dir / "interactions.tsv");
  load_attributes(d, dir / "attributes.tsv");
  d.five_core_passes = m.value("five_core_passes", 0);
  return leave_last_out_split(d, m.at("split_seed").get<uint64_t>());
}

}  // namespace evorec
