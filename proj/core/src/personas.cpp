#include "evorec/personas.hpp"

#include <algorithm>
#include <set>

namespace evorec {

std::string to_string(TraitLevel l) {
  switch (l) {
    case TraitLevel::Low: return "LOW";
    case TraitLevel::Mid: return "MID";
    case TraitLevel::High: return "HIGH";
  }
  return "MID";
}

TraitLevel trait_level_from_string(const std::string& s) {
  if (s == "LOW") return TraitLevel::Low;
  if (s == "MID") return TraitLevel::Mid;
  if (s == "HIGH") return TraitLevel::High;
  throw ParseError("unknown trait level: " + s);
}

int compute_activity(const Dataset& d, const UserId& u) {
  auto it = d.histories.find(u);
  return it == d.histories.end() ? 0 : static_cast<int>(it->second.size());
}

double compute_conformity(const std::vector<std::pair<double, double>>& rating_pairs) {
  if (rating_pairs.empty()) throw Error("compute_conformity: empty rating list");
  double sum = 0;
  for (const auto& [r, rbar] : rating_pairs) {
    double dlt = r - rbar;
    sum += dlt * dlt;
  }
  return sum / static_cast<double>(rating_pairs.size());
}

int compute_diversity(const std::vector<std::string>& history_categories) {
  if (history_categories.empty()) throw Error("compute_diversity: empty history");
  std::set<std::string> cats(history_categories.begin(), history_categories.end());
  return static_cast<int>(cats.size());
}

TraitVector compute_traits(const Dataset& d, const UserId& u) {
  TraitVector t;
  const auto& hist = d.history(u);
  t.activity = static_cast<int>(hist.size());

  // Global item means computed once per call over the full interaction list.
  std::unordered_map<ItemId, std::pair<double, int>> acc;
  for (const auto& r : d.interactions) {
    auto& a = acc[r.item];
    a.first += r.rating;
    a.second += 1;
  }
  std::vector<std::pair<double, double>> pairs;
  std::vector<std::string> cats;
  for (size_t idx : hist) {
    const auto& r = d.interactions[idx];
    const auto& a = acc[r.item];
    pairs.emplace_back(r.rating, a.first / a.second);
    cats.push_back(d.attributes.at(r.item).category);
  }
  t.conformity = compute_conformity(pairs);
  t.diversity = compute_diversity(cats);
  return t;
}

namespace {

// q(f) = sorted[ceil(f*n)] with 0-based clamping; integer arithmetic so the
// 1/3 and 2/3 cut indices are exact.
template <typename T>
std::pair<T, T> tertile_thresholds(std::vector<T> values) {
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  size_t i1 = std::min((n + 2) / 3, n - 1);
  size_t i2 = std::min((2 * n + 2) / 3, n - 1);
  return {values[i1], values[i2]};
}

template <typename T>
TraitLevel classify(T v, const std::pair<T, T>& thr) {
  if (v < thr.first) return TraitLevel::Low;
  if (v < thr.second) return TraitLevel::Mid;
  return TraitLevel::High;
}

}  // namespace

BucketResult bucket_traits(const std::map<UserId, TraitVector>& all_users) {
  BucketResult out;
  if (all_users.size() < 3) {
    out.degenerate = true;
    for (const auto& [u, _] : all_users) out.levels[u] = TraitLevels{};
    return out;
  }
  std::vector<int> act, div;
  std::vector<double> conf;
  for (const auto& [u, t] : all_users) {
    act.push_back(t.activity);
    conf.push_back(t.conformity);
    div.push_back(t.diversity);
  }
  auto at = tertile_thresholds(act);
  auto ct = tertile_thresholds(conf);
  auto dt = tertile_thresholds(div);
  for (const auto& [u, t] : all_users) {
    TraitLevels l;
    l.activity = classify(t.activity, at);
    l.conformity = classify(t.conformity, ct);
    l.diversity = classify(t.diversity, dt);
    out.levels[u] = l;
  }
  return out;
}

namespace {

const char* activity_text(TraitLevel l) {
  switch (l) {
    case TraitLevel::High:
      return "Frequently interacts with the system and maintains a high volume of engagement with recommendations.";
    case TraitLevel::Mid:
      return "Interacts moderately, primarily when items strictly align with personal preferences.";
    case TraitLevel::Low:
      return "Rarely interacts with the system and does not interact if recommendations are not relevant to their interests.";
  }
  return "";
}

const char* conformity_text(TraitLevel l) {
  switch (l) {
    case TraitLevel::High:
      return "Heavily influenced by popularity and public ratings; tends to follow mainstream trends.";
    case TraitLevel::Mid:
      return "Considers both popularity and personal taste, balancing trends with individual preferences.";
    case TraitLevel::Low:
      return "Ignores popularity and trends, evaluating items purely based on intrinsic personal preference.";
  }
  return "";
}

const char* diversity_text(TraitLevel l) {
  switch (l) {
    case TraitLevel::High:
      return "Seeks high variety and novelty, enjoying the exploration of diverse categories and new styles.";
    case TraitLevel::Mid:
      return "Mostly consumes preferred categories but occasionally explores similar alternatives.";
    case TraitLevel::Low:
      return "Sticks strictly to a narrow set of familiar categories and avoids exploration.";
  }
  return "";
}

}  // namespace

Persona render_persona(const UserId& u, const TraitLevels& levels, const TraitVector& traits) {
  Persona p;
  p.user = u;
  p.traits = traits;
  p.levels = levels;
  p.description =
      "Activity (" + to_string(levels.activity) + "): " + activity_text(levels.activity) + "\n" +
      "Conformity (" + to_string(levels.conformity) + "): " + conformity_text(levels.conformity) + "\n" +
      "Diversity (" + to_string(levels.diversity) + "): " + diversity_text(levels.diversity);
  return p;
}

std::map<UserId, Persona> build_personas(const Dataset& d) {
  std::map<UserId, TraitVector> traits;
  // Item means shared across users; compute_traits recomputes them, which is
  // wasteful dataset-wide, so inline the loop here.
  std::unordered_map<ItemId, std::pair<double, int>> acc;
  for (const auto& r : d.interactions) {
    auto& a = acc[r.item];
    a.first += r.rating;
    a.second += 1;
  }
  for (const auto& u : d.users) {
    TraitVector t;
    const auto& hist = d.history(u);
    t.activity = static_cast<int>(hist.size());
    std::vector<std::pair<double, double>> pairs;
    std::vector<std::string> cats;
    for (size_t idx : hist) {
      const auto& r = d.interactions[idx];
      const auto& a = acc[r.item];
      pairs.emplace_back(r.rating, a.first / a.second);
      cats.push_back(d.attributes.at(r.item).category);
    }
    t.conformity = compute_conformity(pairs);
    t.diversity = compute_diversity(cats);
    traits[u] = t;
  }
  auto buckets = bucket_traits(traits);
  std::map<UserId, Persona> out;
  for (const auto& [u, t] : traits) out[u] = render_persona(u, buckets.levels.at(u), t);
  return out;
}

std::string persona_manifest_line(const Persona& p) {
  return p.user + "\t" + std::to_string(p.traits.activity) + "\t" +
         format_double(p.traits.conformity) + "\t" + std::to_string(p.traits.diversity) + "\t" +
         to_string(p.levels.activity) + "\t" + to_string(p.levels.conformity) + "\t" +
         to_string(p.levels.diversity) + "\t" + p.description;
}

}  // namespace evorec
