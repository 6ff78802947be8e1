#include "evorec/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace evorec {

nlohmann::json probe_result_to_json(const ProbeResult& r) {
  nlohmann::json j;
  if (r.value) j["value"] = *r.value;
  if (!r.values.empty()) j["values"] = r.values;
  if (!r.core_findings.empty()) {
    auto cf = nlohmann::json::array();
    for (const auto& [attr, count] : r.core_findings) cf.push_back({attr, count});
    j["core_findings"] = cf;
  }
  j["metadata"] = r.metadata;
  return j;
}

ProbeResult probe_result_from_json(const std::string& probe_id, const nlohmann::json& j) {
  ProbeResult r;
  r.probe_id = probe_id;
  if (j.contains("value")) r.value = j["value"].get<double>();
  if (j.contains("values")) r.values = j["values"].get<std::map<std::string, double>>();
  if (j.contains("core_findings")) {
    for (const auto& e : j["core_findings"]) {
      r.core_findings.emplace_back(e.at(0).get<std::string>(), e.at(1).get<int64_t>());
    }
  }
  if (j.contains("metadata")) r.metadata = j["metadata"];
  return r;
}

ProbeResult probe_embedding_collapse(const Matrix& emb, size_t sample_size, uint64_t seed) {
  // Keep only rows with nonzero norm.
  std::vector<size_t> usable;
  for (size_t i = 0; i < emb.rows; ++i) {
    double n2 = 0;
    for (size_t c = 0; c < emb.cols; ++c) n2 += emb.row(i)[c] * emb.row(i)[c];
    if (n2 > 0) usable.push_back(i);
  }
  size_t skipped = emb.rows - usable.size();
  if (usable.size() < 2) throw Error("insufficient embeddings: fewer than 2 usable rows");

  std::vector<size_t> rows;
  if (usable.size() > sample_size) {
    Rng rng(seed);
    for (size_t p : rng.sample_without_replacement(usable.size(), sample_size)) {
      rows.push_back(usable[p]);
    }
  } else {
    rows = usable;
  }
  std::vector<double> norms(rows.size());
  for (size_t a = 0; a < rows.size(); ++a) {
    double n2 = 0;
    for (size_t c = 0; c < emb.cols; ++c) n2 += emb.row(rows[a])[c] * emb.row(rows[a])[c];
    norms[a] = std::sqrt(n2);
  }
  double sum = 0;
  size_t pairs = 0;
  for (size_t a = 0; a < rows.size(); ++a) {
    for (size_t b = a + 1; b < rows.size(); ++b) {
      double d = 0;
      for (size_t c = 0; c < emb.cols; ++c) d += emb.row(rows[a])[c] * emb.row(rows[b])[c];
      sum += d / (norms[a] * norms[b]);
      ++pairs;
    }
  }
  ProbeResult r;
  r.probe_id = "embedding_collapse";
  r.value = sum / static_cast<double>(pairs);
  r.metadata["sample_size"] = rows.size();
  r.metadata["skipped_zero_norm"] = skipped;
  r.metadata["seed"] = seed;
  return r;
}

ProbeResult probe_ranking_margin(const std::vector<MarginRow>& rows,
                                 const std::unordered_map<ItemId, ItemAttributes>& attributes,
                                 double low_fraction) {
  if (rows.empty()) throw Error("probe_ranking_margin: empty score table");
  if (low_fraction <= 0 || low_fraction >= 1) throw Error("low_fraction must be in (0,1)");
  std::vector<double> margins(rows.size());
  double sum = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    margins[i] = rows[i].positive_logit - rows[i].negative_logit;
    sum += margins[i];
  }
  // bottom low_fraction, at least one row
  std::vector<size_t> order(rows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return margins[a] < margins[b]; });
  size_t low_n = std::max<size_t>(1, static_cast<size_t>(std::floor(low_fraction * rows.size())));
  std::map<std::string, int64_t> counts;
  for (size_t i = 0; i < low_n; ++i) {
    const auto& row = rows[order[i]];
    auto it = attributes.find(row.positive);
    counts[it != attributes.end() ? it->second.category : "UNKNOWN"]++;
  }
  ProbeResult r;
  r.probe_id = "ranking_margin";
  r.value = sum / static_cast<double>(rows.size());
  for (const auto& [cat, n] : counts) r.core_findings.emplace_back(cat, n);
  std::sort(r.core_findings.begin(), r.core_findings.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  r.metadata["n_pairs"] = rows.size();
  r.metadata["low_fraction"] = low_fraction;
  r.metadata["low_count"] = low_n;
  return r;
}

namespace {

std::vector<ItemId> top_k_of(const std::map<ItemId, double>& scores, int k) {
  std::vector<std::pair<double, ItemId>> ranked;
  for (const auto& [v, s] : scores) ranked.emplace_back(s, v);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ItemId> out;
  for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i) {
    out.push_back(ranked[i].second);
  }
  return out;
}

}  // namespace

ProbeResult probe_swap_sensitivity(const ContextScorer& scorer,
                                   const std::vector<std::vector<ItemId>>& sequences,
                                   const std::vector<ItemId>& catalog, int k) {
  if (sequences.empty()) throw Error("probe_swap_sensitivity: no sequences");
  double sens_sum = 0, logit_sum = 0;
  size_t used = 0, skipped = 0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) {
      ++skipped;
      continue;
    }
    std::vector<ItemId> swapped = seq;
    std::swap(swapped[swapped.size() - 1], swapped[swapped.size() - 2]);
    auto before = scorer(seq, catalog);
    auto after = scorer(swapped, catalog);
    auto top_before = top_k_of(before, k);
    auto top_after = top_k_of(after, k);
    std::set<ItemId> before_set(top_before.begin(), top_before.end());
    size_t changed = 0;
    for (const auto& v : top_after)
      if (!before_set.count(v)) ++changed;
    sens_sum += static_cast<double>(changed) / static_cast<double>(top_before.size());
    // target = the true last item of the original sequence
    const ItemId& target = seq.back();
    logit_sum += std::abs(before.at(target) - after.at(target));
    ++used;
  }
  if (used == 0) throw Error("probe_swap_sensitivity: all sequences shorter than 2");
  ProbeResult r;
  r.probe_id = "swap_sensitivity";
  r.values["swap_sensitivity"] = sens_sum / static_cast<double>(used);
  r.values["logit_delta_swap"] = logit_sum / static_cast<double>(used);
  r.metadata["n_sequences"] = used;
  r.metadata["skipped_short"] = skipped;
  r.metadata["k"] = k;
  return r;
}

ProbeResult probe_recommendation_diversity(const ContextScorer& scorer,
                                           const std::vector<std::vector<ItemId>>& sequences,
                                           const std::vector<ItemId>& catalog,
                                           const std::unordered_map<ItemId, ItemAttributes>& attrs,
                                           int k) {
  if (sequences.empty()) throw Error("probe_recommendation_diversity: no sequences");
  double sum = 0;
  for (const auto& seq : sequences) {
    auto scores = scorer(seq, catalog);
    auto top = top_k_of(scores, k);
    std::set<std::string> cats;
    for (const auto& v : top) {
      auto it = attrs.find(v);
      cats.insert(it != attrs.end() ? it->second.category : "UNKNOWN");
    }
    sum += static_cast<double>(cats.size());
  }
  ProbeResult r;
  r.probe_id = "diversity";
  r.value = sum / static_cast<double>(sequences.size());
  r.metadata["n_sequences"] = sequences.size();
  r.metadata["k"] = k;
  return r;
}

nlohmann::json assemble_d_raw(const std::vector<ProbeResult>& probes) {
  if (probes.empty()) throw Error("assemble_d_raw: no probes");
  nlohmann::json d = nlohmann::json::object();
  for (const auto& p : probes) {
    if (d.contains(p.probe_id)) throw Error("duplicate probe_id: " + p.probe_id);
    d[p.probe_id] = probe_result_to_json(p);
  }
  return d;
}

std::string to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warn: return "warn";
    case Severity::Critical: return "critical";
  }
  return "info";
}

std::string to_string(VerificationStatus v) {
  switch (v) {
    case VerificationStatus::Confirmed: return "confirmed";
    case VerificationStatus::Refuted: return "refuted";
    case VerificationStatus::Untestable: return "untestable";
  }
  return "untestable";
}

const std::map<std::string, std::string> kTagProbeRegistry = {
    {"category_mismatch", "ranking_margin"},
    {"low_diversity", "diversity"},
};

nlohmann::json diagnosis_report_to_json(const DiagnosisReport& r) {
  nlohmann::json j;
  auto fs = nlohmann::json::array();
  for (const auto& f : r.findings) {
    fs.push_back({{"severity", to_string(f.severity)}, {"claim", f.claim}, {"probes", f.probe_ids}});
  }
  j["findings"] = fs;
  auto ver = nlohmann::json::object();
  for (const auto& [tag, st] : r.verification) ver[tag] = to_string(st);
  j["verification"] = ver;
  j["narrative"] = r.narrative;
  j["narrative_degraded"] = r.narrative_degraded;
  return j;
}

namespace {

struct ProbeSeverity {
  Severity severity = Severity::Info;
  double headline = 0;  // the value the threshold was applied to
};

ProbeSeverity severity_of(const std::string& probe_id, const nlohmann::json& entry,
                          const ProbeThreshold& thr) {
  double v = 0;
  if (entry.contains("value")) {
    v = entry["value"].get<double>();
  } else if (entry.contains("values") && !entry["values"].empty()) {
    // convention: a multi-valued probe's headline value shares the probe id,
    // else the first key is used
    const auto& vals = entry["values"];
    v = vals.contains(probe_id) ? vals[probe_id].get<double>() : vals.begin().value().get<double>();
  }
  ProbeSeverity out;
  out.headline = v;
  if (thr.high_is_bad) {
    if (v >= thr.critical) out.severity = Severity::Critical;
    else if (v >= thr.warn) out.severity = Severity::Warn;
  } else {
    if (v <= thr.critical) out.severity = Severity::Critical;
    else if (v <= thr.warn) out.severity = Severity::Warn;
  }
  return out;
}

std::string claim_text(const std::string& probe_id, const ProbeSeverity& ps,
                       const ProbeThreshold& thr) {
  std::string dir = thr.high_is_bad ? "above" : "below";
  double bound = ps.severity == Severity::Critical ? thr.critical : thr.warn;
  if (probe_id == "embedding_collapse") {
    return "embedding collapse: mean pairwise cosine similarity " + format_double(ps.headline) +
           " is " + dir + " the " + to_string(ps.severity) + " threshold " + format_double(bound);
  }
  if (probe_id == "ranking_margin") {
    return "ranking margin: global mean margin " + format_double(ps.headline) + " is " + dir +
           " the " + to_string(ps.severity) + " threshold " + format_double(bound);
  }
  if (probe_id == "swap_sensitivity") {
    return "order-insensitive: swap sensitivity " + format_double(ps.headline) + " is " + dir +
           " the " + to_string(ps.severity) + " threshold " + format_double(bound) +
           "; the model ignores the order of recent interactions";
  }
  return probe_id + ": value " + format_double(ps.headline) + " is " + dir + " the " +
         to_string(ps.severity) + " threshold " + format_double(bound);
}

}  // namespace

DiagnosisReport interpret_diagnosis(const nlohmann::json& d_raw,
                                    const std::map<std::string, ProbeThreshold>& thresholds,
                                    const SimulatorReport* sim_report,
                                    const PromptRegistry& prompts, Gateway* llm) {
  DiagnosisReport rep;
  for (const auto& [probe_id, thr] : thresholds) {
    if (!d_raw.contains(probe_id)) continue;
    auto ps = severity_of(probe_id, d_raw[probe_id], thr);
    if (ps.severity != Severity::Info) {
      rep.findings.push_back({ps.severity, claim_text(probe_id, ps, thr), {probe_id}});
    }
  }
  if (sim_report) {
    for (const auto& fp : sim_report->common_failures) {
      auto reg = kTagProbeRegistry.find(fp.tag);
      if (reg == kTagProbeRegistry.end() || !d_raw.contains(reg->second) ||
          !thresholds.count(reg->second)) {
        rep.verification[fp.tag] = VerificationStatus::Untestable;
        continue;
      }
      auto ps = severity_of(reg->second, d_raw[reg->second], thresholds.at(reg->second));
      rep.verification[fp.tag] = ps.severity != Severity::Info ? VerificationStatus::Confirmed
                                                               : VerificationStatus::Refuted;
    }
  }
  if (llm) {
    std::string findings_text;
    for (const auto& f : rep.findings) {
      findings_text += "- [" + to_string(f.severity) + "] " + f.claim + "\n";
    }
    std::string ver_text;
    for (const auto& [tag, st] : rep.verification) ver_text += "- " + tag + ": " + to_string(st) + "\n";
    ChatRequest req;
    req.instruction_id = "I_DIAG";
    req.prompt = prompts.render("I_DIAG", {{"d_raw", d_raw.dump(2)},
                                           {"findings", findings_text},
                                           {"verification", ver_text}});
    try {
      auto j = llm->chat_json(req);
      rep.narrative = j.value("narrative", j.dump());
    } catch (const GatewayError&) {
      rep.narrative_degraded = true;
    }
  } else {
    rep.narrative_degraded = true;
  }
  return rep;
}

}  // namespace evorec
