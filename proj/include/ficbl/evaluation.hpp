#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ficbl/format.hpp"
#include "ficbl/inference.hpp"
#include "ficbl/pipeline.hpp"

namespace ficbl {

inline constexpr const char* kF1Averaging = "macro (unweighted mean over values present in truth)";

// Presence of digit 9 forces the largest digit to be 9 (grid schema).
inline constexpr const char* kGridRule = "c9=2 -> c0=7";

// Increasingly detailed rules on the annotated schema: target = odd XNOR lt5.
inline constexpr const char* kRuleG1 = "c1=2 & c2=2 -> c0=2";
inline constexpr const char* kRuleG2 = "(c1=1 & c2=2 -> c0=1) & (c1=2 & c2=2 -> c0=2)";
inline constexpr const char* kRuleG3 = "(c1=1 & c2=1) | (c1=2 & c2=2) <-> c0=2";

/// Unweighted mean of per-value F1 over the values that occur in `truth`.
/// A value's F1 is 0 when precision or recall is undefined.
inline double macro_f1(std::span<const int> predicted, std::span<const int> truth, int n_values) {
  if (truth.empty()) throw DomainError("macro F1 of an empty input");
  if (predicted.size() != truth.size()) throw DomainError("prediction and truth lengths differ");
  std::vector<std::uint64_t> tp(n_values + 1, 0), fp(n_values + 1, 0), fn(n_values + 1, 0);
  std::vector<bool> present(n_values + 1, false);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i];
    const int t = truth[i];
    if (p < 1 || p > n_values || t < 1 || t > n_values) throw DomainError("value out of range");
    present[t] = true;
    if (p == t) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double sum = 0.0;
  int count = 0;
  for (int v = 1; v <= n_values; ++v) {
    if (!present[v]) continue;
    ++count;
    const double denom = 2.0 * tp[v] + fp[v] + fn[v];
    sum += denom > 0 ? 2.0 * tp[v] / denom : 0.0;
  }
  return sum / count;
}

/// Equal-width bins over [0, 1]; 1.0 falls into the last bin.
inline std::vector<std::size_t> probability_histogram(std::span<const double> probs, std::size_t bins) {
  if (bins < 2) throw DomainError("histogram needs at least 2 bins");
  std::vector<std::size_t> out(bins, 0);
  for (double p : probs) {
    const double clamped = std::clamp(p, 0.0, 1.0);
    const auto k = std::min(bins - 1, static_cast<std::size_t>(clamped * static_cast<double>(bins)));
    ++out[k];
  }
  return out;
}

inline std::vector<std::size_t> probability_histogram(const std::vector<Prediction>& predictions,
                                                      std::size_t r, int v, std::size_t bins) {
  std::vector<double> probs;
  probs.reserve(predictions.size());
  for (const auto& p : predictions) probs.push_back(p.posterior.at(r).at(v - 1));
  return probability_histogram(probs, bins);
}

struct Evaluation {
  std::vector<Prediction> predictions;
  std::vector<double> f1;  // macro F1 per concept, over test images labelled on it
};

/// Arg-max predictions for every image against its labels.
inline Evaluation evaluate(const ProbabilityModel& model, const std::vector<Occupancy>& occ,
                           const Dataset& truth, double epsilon = kDefaultEpsilon) {
  if (occ.size() != truth.size()) throw DomainError("occupancy and dataset sizes differ");
  Evaluation out;
  out.predictions.reserve(occ.size());
  for (const auto& o : occ) out.predictions.push_back(predict(model, o, epsilon));
  for (std::size_t r = 0; r < model.schema.size(); ++r) {
    std::vector<int> pred, actual;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const int t = truth.records[i].label[r];
      if (t == kMissing) continue;
      actual.push_back(t);
      pred.push_back(out.predictions[i].argmax(r));
    }
    out.f1.push_back(actual.empty() ? 0.0 : macro_f1(pred, actual, model.schema.cardinality(r)));
  }
  return out;
}

/// Macro F1 of always predicting the most frequent training value of concept r.
inline double majority_baseline_f1(const Dataset& train, const Dataset& test, std::size_t r) {
  const int nr = train.schema.cardinality(r);
  std::vector<std::size_t> freq(nr + 1, 0);
  for (const auto& rec : train.records) {
    if (rec.label[r] != kMissing) ++freq[rec.label[r]];
  }
  const int majority = static_cast<int>(std::max_element(freq.begin() + 1, freq.end()) - freq.begin());
  std::vector<int> pred, actual;
  for (const auto& rec : test.records) {
    if (rec.label[r] == kMissing) continue;
    actual.push_back(rec.label[r]);
    pred.push_back(majority);
  }
  return macro_f1(pred, actual, nr);
}

// ---------------------------------------------------------------------------
// Label-noise sweep

struct SweepRow {
  double beta = 0.0;
  std::vector<double> no_rule;    // target F1 per seed
  std::vector<double> with_rule;  // target F1 per seed
};

struct SweepReport {
  std::string rule;
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;
};

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// For every seed and beta: corrupt the training targets that satisfy `rule`,
/// train, and score the target on the clean test set without and with the
/// rule. The embedder and clusters do not see labels, so they are fitted once
/// per seed and shared by all betas.
inline SweepReport sweep_beta(const Dataset& train, const Dataset& test, const RuleExpr& rule,
                              std::span<const double> betas, const TrainConfig& cfg,
                              std::span<const std::uint64_t> seeds,
                              double epsilon = kDefaultEpsilon) {
  if (betas.empty() || seeds.empty()) throw DomainError("sweep needs at least one beta and one seed");
  SweepReport report{to_string(rule, train.schema), cfg, {seeds.begin(), seeds.end()}, {}};
  for (double b : betas) report.rows.push_back({b, {}, {}});
  for (std::uint64_t seed : seeds) {
    TrainConfig run = cfg;
    run.seed = seed;
    const FeatureModel features = fit_features(train, run);
    const auto assigned = assign_images(features, train);
    const auto test_occ = occupancies(features, test);
    for (auto& row : report.rows) {
      const Dataset noisy = invert_labels(train, rule, row.beta, derive_seed(seed, 7));
      const CountTables counts = fit_counts(assigned, noisy.labels(), run.clusters, train.schema);
      const ProbabilityModel plain = probability_model(counts);
      row.no_rule.push_back(evaluate(plain, test_occ, test, epsilon).f1[0]);
      const ProbabilityModel ruled = apply_rule(plain, counts, rule);
      row.with_rule.push_back(evaluate(ruled, test_occ, test, epsilon).f1[0]);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rule hierarchy under heavy target noise

struct NamedRule {
  std::string name;
  std::optional<RuleExpr> rule;  // nullopt: no rule
};

struct HierarchyEntry {
  std::string name;
  std::vector<std::size_t> histogram;
  double uncertain_fraction = 0.0;  // posteriors of target value 2 in (0.4, 0.6)
  double target_f1 = 0.0;
};

struct HierarchyReport {
  double beta = 0.5;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::vector<HierarchyEntry> entries;
};

/// Inverts a beta-fraction of all binary targets, trains once, then predicts
/// the clean test set under each rule in turn.
inline HierarchyReport rule_hierarchy(const Dataset& train, const Dataset& test,
                                      const std::vector<NamedRule>& rules, double beta,
                                      const TrainConfig& cfg, std::size_t bins = 10,
                                      double epsilon = kDefaultEpsilon) {
  if (train.schema.cardinality(0) != 2) throw DomainError("rule hierarchy needs a binary target");
  HierarchyReport report{beta, cfg.seed, cfg, {}};
  const Dataset noisy = invert_labels(train, RuleExpr{}, beta, derive_seed(cfg.seed, 7));
  const FeatureModel features = fit_features(noisy, cfg);
  const CountTables counts =
      fit_counts(assign_images(features, noisy), noisy.labels(), cfg.clusters, noisy.schema);
  const auto test_occ = occupancies(features, test);
  const ProbabilityModel plain = probability_model(counts);
  for (const auto& named : rules) {
    const ProbabilityModel pm = named.rule ? apply_rule(plain, counts, *named.rule) : plain;
    const Evaluation ev = evaluate(pm, test_occ, test, epsilon);
    HierarchyEntry entry{named.name, probability_histogram(ev.predictions, 0, 2, bins), 0.0, ev.f1[0]};
    std::size_t uncertain = 0;
    for (const auto& p : ev.predictions) {
      const double q = p.posterior[0][1];
      if (q > 0.4 && q < 0.6) ++uncertain;
    }
    entry.uncertain_fraction = static_cast<double>(uncertain) / static_cast<double>(ev.predictions.size());
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string config_string(const TrainConfig& cfg) {
  std::ostringstream s;
  s << "patch=" << cfg.patch.patch_w << "x" << cfg.patch.patch_h << " stride=" << cfg.patch.stride_x
    << "x" << cfg.patch.stride_y << " embed_dim=" << cfg.embed_dim << " clusters=" << cfg.clusters
    << " alg=" << (cfg.algorithm == ClusterAlgorithm::Em ? "em" : "kmeans");
  return s.str();
}

/// FNV-1a of the configuration text, as 16 hex digits.
inline std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string sweep_csv(const SweepReport& report) {
  std::ostringstream s;
  s << "# rule: " << report.rule << "\n# config: " << config_string(report.config)
    << "\n# f1: " << kF1Averaging << "\n# seeds:";
  for (auto seed : report.seeds) s << ' ' << seed;
  s << "\nbeta,f1_no_rule_mean,f1_no_rule_sd,f1_rule_mean,f1_rule_sd\n";
  for (const auto& row : report.rows) {
    s << format_real(row.beta) << ',' << format_real(mean(row.no_rule)) << ','
      << format_real(stddev(row.no_rule)) << ',' << format_real(mean(row.with_rule)) << ','
      << format_real(stddev(row.with_rule)) << '\n';
  }
  return s.str();
}

inline std::string sweep_summary(const SweepReport& report) {
  std::ostringstream s;
  s << "label-noise sweep\n  rule:   " << report.rule << "\n  config: " << config_string(report.config)
    << "\n  seeds:  " << report.seeds.size() << "\n  f1:     " << kF1Averaging << "\n\n";
  char line[128];
  std::snprintf(line, sizeof(line), "  %6s  %16s  %16s\n", "beta", "no rule", "with rule");
  s << line;
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "  %6.3f  %7.4f +- %6.4f  %7.4f +- %6.4f\n", row.beta,
                  mean(row.no_rule), stddev(row.no_rule), mean(row.with_rule), stddev(row.with_rule));
    s << line;
  }
  return s.str();
}

inline std::string hierarchy_csv(const HierarchyReport& report) {
  std::ostringstream s;
  s << "# beta: " << format_real(report.beta) << "\n# seed: " << report.seed
    << "\n# config: " << config_string(report.config) << "\n# f1: " << kF1Averaging << "\nrule";
  const std::size_t bins = report.entries.empty() ? 0 : report.entries.front().histogram.size();
  for (std::size_t k = 0; k < bins; ++k) s << ",bin" << k;
  s << ",uncertain_fraction,target_f1\n";
  for (const auto& e : report.entries) {
    s << e.name;
    for (auto c : e.histogram) s << ',' << c;
    s << ',' << format_real(e.uncertain_fraction) << ',' << format_real(e.target_f1) << '\n';
  }
  return s.str();
}

inline std::string hierarchy_summary(const HierarchyReport& report) {
  std::ostringstream s;
  s << "rule hierarchy\n  beta:   " << report.beta << "\n  seed:   " << report.seed
    << "\n  config: " << config_string(report.config) << "\n  f1:     " << kF1Averaging << "\n\n";
  for (const auto& e : report.entries) {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-5s uncertain %.4f  target f1 %.4f  bins", e.name.c_str(),
                  e.uncertain_fraction, e.target_f1);
    s << line;
    for (auto c : e.histogram) s << ' ' << c;
    s << '\n';
  }
  return s.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace ficbl
