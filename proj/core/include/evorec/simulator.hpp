#pragma once

#include <functional>
#include <optional>

#include "evorec/dataset.hpp"
#include "evorec/llm.hpp"
#include "evorec/personas.hpp"
#include "evorec/simulator_types.hpp"

namespace evorec {

std::vector<UserId> sample_users(const Dataset& d, size_t n, uint64_t seed);

// One qualitative critique of a recommendation list, from the persona's point
// of view. Retries once on a malformed reply, then degrades to a fallback
// critique tagged `other` with the raw text preserved.
UserCritique critique_user(const Persona& p, const Dataset& d,
                           const std::vector<ItemId>& history,
                           const std::vector<ItemId>& recommendations,
                           const PromptRegistry& prompts, Gateway& llm);

// Prevalence fractions are exact tag counts over the critique count; only the
// narrative comes from the LLM.
SimulatorReport summarize_reports(const std::vector<UserCritique>& critiques,
                                  const PromptRegistry& prompts, Gateway& llm);

// Runs critiques for a user sample with bounded concurrency.
SimulatorReport run_simulator(const Dataset& d, const std::map<UserId, Persona>& personas,
                              const std::function<std::vector<ItemId>(const UserId&)>& recommender,
                              size_t n_users, uint64_t seed, const PromptRegistry& prompts,
                              Gateway& llm, int concurrency = 4,
                              std::vector<UserCritique>* critiques_out = nullptr);

// items for a page index, empty when exhausted
using Pager = std::function<std::vector<ItemId>(int page_index)>;

SessionOutcome simulate_session(const Persona& p, const Dataset& d, const Pager& pager,
                                const PromptRegistry& prompts, Gateway& llm, int max_pages);

}  // namespace evorec
