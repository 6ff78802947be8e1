#pragma once

#include <map>
#include <string>
#include <vector>

#include "evorec/dataset.hpp"

namespace evorec {

enum class TraitLevel { Low, Mid, High };

std::string to_string(TraitLevel l);
TraitLevel trait_level_from_string(const std::string& s);

struct TraitVector {
  int activity = 0;        // |H_u|
  double conformity = 0;   // mean squared deviation from item global means
  int diversity = 0;       // unique interacted categories
};

struct TraitLevels {
  TraitLevel activity = TraitLevel::Mid;
  TraitLevel conformity = TraitLevel::Mid;
  TraitLevel diversity = TraitLevel::Mid;
};

struct Persona {
  UserId user;
  TraitVector traits;
  TraitLevels levels;
  std::string description;
};

int compute_activity(const Dataset& d, const UserId& u);
// pairs of (user rating, item global-average rating)
double compute_conformity(const std::vector<std::pair<double, double>>& rating_pairs);
int compute_diversity(const std::vector<std::string>& history_categories);

TraitVector compute_traits(const Dataset& d, const UserId& u);

struct BucketResult {
  std::map<UserId, TraitLevels> levels;
  bool degenerate = false;  // fewer than 3 users: everyone Mid
};

// Tertile bucketing: per trait, thresholds at the 1/3 and 2/3 empirical
// quantiles; strictly below the lower threshold -> LOW, strictly below the
// upper -> MID, else HIGH (ties go to the higher bucket).
BucketResult bucket_traits(const std::map<UserId, TraitVector>& all_users);

Persona render_persona(const UserId& u, const TraitLevels& levels, const TraitVector& traits);

std::map<UserId, Persona> build_personas(const Dataset& d);

std::string persona_manifest_line(const Persona& p);

}  // namespace evorec
