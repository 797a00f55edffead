// One PASS/FAIL line per acceptance criterion. Criterion 9 reruns this binary
// with --fingerprint and compares every number the other criteria produced.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "support/fixture_f1.hpp"
#include "support/oracle.hpp"

using namespace ficbl;
using oracle::Q;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Every number a criterion computes, in order, for the determinism check.
std::string g_fingerprint;

void record(const std::string& tag, double x) { g_fingerprint += tag + " " + format_real(x) + "\n"; }

void fail(Outcome& o, const std::string& why) {
  if (o.pass) o.detail = why;
  o.pass = false;
}

void check_near(Outcome& o, double got, double want, double tol, const std::string& what) {
  if (!(std::abs(got - want) <= tol)) fail(o, what + ": got " + format_real(got) + ", want " + format_real(want));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

oracle::Instance f1_instance() {
  oracle::Instance in;
  in.cards = {2, 3, 2};
  in.clusters = 3;
  in.assign = f1::assignments();
  for (const auto& z : f1::labels()) in.labels.push_back(z);
  auto lit = [](std::size_t r, int v) {
    auto n = std::make_shared<oracle::Node>();
    n->r = r;
    n->v = v;
    return n;
  };
  in.rule = std::make_shared<oracle::Node>();
  in.rule->kind = oracle::Node::Imp;
  in.rule->a = lit(1, 2);
  in.rule->b = lit(0, 1);
  in.occupancy = {2, 0, 2};
  return in;
}

// Sum-to-one of every posterior and every present conditional.
void check_normalized(Outcome& o, const ProbabilityModel& m, const Prediction& p, const std::string& where) {
  for (std::size_t r = 0; r < m.schema.size(); ++r) {
    double s = 0.0;
    for (double x : p.posterior[r]) s += x;
    check_near(o, s, 1.0, 1e-9, where + " posterior sum, concept " + std::to_string(r));
    for (int v = 1; v <= m.schema.cardinality(r); ++v) {
      if (!m.conditional(r, v)) continue;
      double c = 0.0;
      for (double x : *m.conditional(r, v)) c += x;
      check_near(o, c, 1.0, 1e-9, where + " conditional sum, concept " + std::to_string(r));
    }
  }
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = f1::model();
  const auto post = cluster_posteriors(f1::counts());
  const auto exact = oracle::tables(f1_instance());

  const std::vector<std::vector<Q>> priors = {{Q(3, 5), Q(2, 5)}, {Q(1, 5), Q(2, 5), Q(2, 5)}, {Q(4, 5), Q(1, 5)}};
  const std::vector<std::vector<std::vector<Q>>> conditionals = {
      {{Q(16, 24), Q(7, 24), Q(1, 24)}, {Q(12, 16), Q(0), Q(4, 16)}},
      {{Q(6, 8), Q(0), Q(2, 8)}, {Q(12, 16), Q(2, 16), Q(2, 16)}, {Q(10, 16), Q(5, 16), Q(1, 16)}},
      {{Q(22, 32), Q(5, 32), Q(5, 32)}, {Q(6, 8), Q(2, 8), Q(0)}},
  };
  const std::vector<std::vector<std::vector<Q>>> in_cluster = {
      {{Q(16, 28), Q(12, 28)}, {Q(6, 28), Q(12, 28), Q(10, 28)}, {Q(22, 28), Q(6, 28)}},
      {{Q(1), Q(0)}, {Q(0), Q(2, 7), Q(5, 7)}, {Q(5, 7), Q(2, 7)}},
      {{Q(1, 5), Q(4, 5)}, {Q(2, 5), Q(2, 5), Q(1, 5)}, {Q(1), Q(0)}},
  };
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < priors[r].size(); ++k) {
      if (exact.prior[r][k] != priors[r][k]) fail(o, "rational tally disagrees with the prior table");
      check_near(o, model.concepts[r].prior[k], oracle::to_double(priors[r][k]), 1e-12, "prior");
      record("prior", model.concepts[r].prior[k]);
      const auto& c = model.concepts[r].conditional[k];
      if (!c) {
        fail(o, "missing conditional");
        continue;
      }
      for (std::size_t l = 0; l < 3; ++l) {
        if ((*exact.cond[r][k])[l] != conditionals[r][k][l]) fail(o, "rational tally disagrees with the conditional table");
        check_near(o, (*c)[l], oracle::to_double(conditionals[r][k][l]), 1e-12, "conditional");
        record("cond", (*c)[l]);
      }
    }
  }
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t r = 0; r < 3; ++r) {
      if (!post[l][r]) {
        fail(o, "missing in-cluster posterior");
        continue;
      }
      for (std::size_t k = 0; k < in_cluster[l][r].size(); ++k) {
        check_near(o, (*post[l][r])[k], oracle::to_double(in_cluster[l][r][k]), 1e-12, "in-cluster posterior");
        record("incluster", (*post[l][r])[k]);
      }
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 1.0) fail(o, "took " + fixed(secs, 3) + " s");
  if (o.pass) o.detail = "priors, conditionals and in-cluster posteriors exact, " + fixed(secs * 1000, 2) + " ms";
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = predict(f1::model(), f1::test_occupancy());
  const std::vector<std::vector<double>> want = {{0.032, 0.968}, {0.630, 0.315, 0.055}, {0.999, 0.001}};
  const std::vector<double> evidence = {0.087, 0.067, 0.056};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < want[r].size(); ++k) {
      check_near(o, p.posterior[r][k], want[r][k], 0.001, "posterior");
      record("posterior", p.posterior[r][k]);
    }
    check_near(o, p.evidence(r), evidence[r], 0.001, "normalizer");
    record("evidence", p.evidence(r));
  }
  const double secs = seconds_since(t0);
  if (secs >= 1.0) fail(o, "took " + fixed(secs, 3) + " s");
  if (o.pass) {
    o.detail = "posteriors " + fixed(p.posterior[0][0], 3) + "/" + fixed(p.posterior[0][1], 3) + " ... normalizers " +
               fixed(p.evidence(0), 3) + " " + fixed(p.evidence(1), 3) + " " + fixed(p.evidence(2), 3) + ", " +
               fixed(secs * 1000, 2) + " ms";
  }
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = f1::model();
  const auto updated = apply_rule(m, f1::counts(), parse_rule("c1=2 -> c0=1", m.schema));
  check_near(o, updated.prior(0, 1), 0.818, 0.001, "updated prior (diagnosis=1)");
  check_near(o, updated.prior(0, 2), 0.182, 0.001, "updated prior (diagnosis=2)");
  const std::vector<std::vector<double>> updated_conditionals = {{0.676, 0.296, 0.028}, {0.75, 0.0, 0.25}};
  for (int v = 1; v <= 2; ++v) {
    for (std::size_t l = 0; l < 3; ++l) {
      check_near(o, (*updated.conditional(0, v))[l], updated_conditionals[v - 1][l], 0.001, "updated conditional");
    }
  }
  for (const auto& c : updated.concepts) {
    for (double x : c.prior) record("rule-prior", x);
    for (const auto& cond : c.conditional) {
      if (cond) {
        for (double x : *cond) record("rule-cond", x);
      }
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 1.0) fail(o, "took " + fixed(secs, 3) + " s");
  if (o.pass) {
    o.detail = "priors " + fixed(updated.prior(0, 1), 3) + "/" + fixed(updated.prior(0, 2), 3) + ", " +
               fixed(secs * 1000, 2) + " ms";
  }
  return o;
}

// Criteria 4 and 5 share the randomized instances.
struct OracleRun {
  Outcome equivalence;
  Outcome normalization;
};

OracleRun criteria4and5() {
  OracleRun run;
  Outcome& o = run.equivalence;
  Outcome& n = run.normalization;
  const auto t0 = std::chrono::steady_clock::now();
  const double eps = kDefaultEpsilon;
  const Q qeps(1, 1000000);
  std::size_t updated_instances = 0;

  auto compare = [&](const ProbabilityModel& m, const oracle::Tables& t, const Prediction& p,
                     const std::vector<std::uint64_t>& occ, const std::string& where) {
    for (std::size_t r = 0; r < m.schema.size(); ++r) {
      for (int v = 1; v <= m.schema.cardinality(r); ++v) {
        check_near(o, m.prior(r, v), oracle::to_double(t.prior[r][v - 1]), 1e-9, where + " prior");
        if (m.conditional(r, v).has_value() != t.cond[r][v - 1].has_value()) {
          fail(o, where + " conditional presence differs");
          continue;
        }
        if (!t.cond[r][v - 1]) continue;
        for (std::size_t l = 0; l < m.clusters; ++l) {
          check_near(o, (*m.conditional(r, v))[l], oracle::to_double((*t.cond[r][v - 1])[l]), 1e-9,
                     where + " conditional");
        }
      }
    }
    const auto want = oracle::posterior(t, occ, qeps);
    for (std::size_t r = 0; r < want.p.size(); ++r) {
      for (std::size_t k = 0; k < want.p[r].size(); ++k) {
        check_near(o, p.posterior[r][k], oracle::to_double(want.p[r][k]), 1e-9, where + " posterior");
        record("oracle-post", p.posterior[r][k]);
      }
      const double e = oracle::to_double(want.evidence[r]);
      check_near(o, p.evidence(r), e, 1e-9 * e, where + " evidence");
    }
    check_normalized(n, m, p, where);
  };

  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto in = oracle::random_instance(seed);
    const std::string where = "instance " + std::to_string(seed);
    const auto schema = in.schema();
    const auto counts = fit_counts(in.assign, in.labels, in.clusters, schema);
    const auto model = probability_model(counts);
    const auto t = oracle::tables(in);
    compare(model, t, predict(model, Occupancy{in.occupancy}, eps), in.occupancy, where);

    const auto g = parse_rule(in.rule_text(), schema);
    const auto u = oracle::update(in, t);
    if (!u) {
      try {
        apply_rule(model, counts, g);
        fail(o, where + ": inconsistent rule accepted");
      } catch (const RuleInconsistentError&) {
      }
      continue;
    }
    ++updated_instances;
    const auto updated = apply_rule(model, counts, g);
    compare(updated, *u, predict(updated, Occupancy{in.occupancy}, eps), in.occupancy, where + " (rule)");
  }

  // F1 cases for the normalization suite
  const auto m = f1::model();
  check_normalized(n, m, predict(m, f1::test_occupancy()), "F1");
  const auto ruled = apply_rule(m, f1::counts(), parse_rule("c1=2 -> c0=1", m.schema));
  check_normalized(n, ruled, predict(ruled, f1::test_occupancy()), "F1 (rule)");
  for (const auto& occ : std::vector<Occupancy>{{{4, 0, 0}}, {{0, 4, 0}}, {{0, 0, 4}}, {{1, 1, 1}}}) {
    check_normalized(n, m, predict(m, occ), "F1");
    check_normalized(n, ruled, predict(ruled, occ), "F1 (rule)");
  }

  const double secs = seconds_since(t0);
  if (secs >= 30.0) fail(o, "took " + fixed(secs, 1) + " s");
  if (o.pass) {
    o.detail = "200 instances (" + std::to_string(updated_instances) + " with a consistent rule), " + fixed(secs, 2) + " s";
  }
  if (n.pass) n.detail = "all sums within 1e-9";
  return run;
}

std::vector<std::pair<GrayImage, int>> load_mnist() {
  const std::string dir = FICBL_DATA_DIR;
  return load_idx(dir + "/images-idx3-ubyte.gz", dir + "/labels-idx1-ubyte.gz");
}

TrainConfig grid_config(std::size_t clusters, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.patch = {28, 28, 28, 28};
  cfg.embed_dim = 16;
  cfg.clusters = clusters;
  cfg.algorithm = ClusterAlgorithm::Em;
  cfg.seed = seed;
  return cfg;
}

struct GridData {
  Dataset train, test;
};

Outcome criterion6(const GridData& grid) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = grid_config(80, 1);
  const TrainedModel model = ficbl::train(grid.train, cfg);
  const auto occ = occupancies(model.features, grid.test);
  const Evaluation ev = evaluate(effective_model(model), occ, grid.test);
  const double secs = seconds_since(t0);
  double worst_margin = 1.0;
  std::string worst;
  for (std::size_t r = 1; r < grid.train.schema.size(); ++r) {
    const double base = majority_baseline_f1(grid.train, grid.test, r);
    record("grid-f1", ev.f1[r]);
    record("grid-baseline", base);
    const double margin = ev.f1[r] - base;
    if (margin < worst_margin) {
      worst_margin = margin;
      worst = grid.train.schema.name(r) + " " + fixed(ev.f1[r], 3) + " vs " + fixed(base, 3);
    }
    if (margin < 0.1) fail(o, grid.train.schema.name(r) + " F1 " + fixed(ev.f1[r], 3) + " vs baseline " + fixed(base, 3));
  }
  record("grid-target-f1", ev.f1[0]);
  g_fingerprint += serialize_model(model);
  if (secs >= 600.0) fail(o, "took " + fixed(secs, 1) + " s");
  if (o.pass) o.detail = "smallest margin " + fixed(worst_margin, 3) + " (" + worst + "), " + fixed(secs, 1) + " s";
  return o;
}

Outcome criterion7(const GridData& grid) {
  Outcome o;
  const std::vector<double> betas = {0.2, 0.3};
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const RuleExpr rule = parse_rule(kGridRule, grid.train.schema);
  const auto report = sweep_beta(grid.train, grid.test, rule, betas, grid_config(80, 0), seeds);
  g_fingerprint += sweep_csv(report);
  std::string detail;
  for (const auto& row : report.rows) {
    int wins = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) wins += row.with_rule[s] > row.no_rule[s] ? 1 : 0;
    detail += (detail.empty() ? "" : ", ") + std::string("beta ") + fixed(row.beta, 1) + ": " + std::to_string(wins) +
              "/5 (" + fixed(mean(row.no_rule), 3) + " -> " + fixed(mean(row.with_rule), 3) + ")";
    if (wins < 4) fail(o, "");
  }
  o.detail = detail;
  return o;
}

Outcome criterion8(const std::vector<std::pair<GrayImage, int>>& mnist) {
  Outcome o;
  const Dataset train = make_annotated_dataset(make_digit_pool(mnist, PoolPart::Train), 2000, 1);
  const Dataset test = make_annotated_dataset(make_digit_pool(mnist, PoolPart::Test), 1000, 2);
  const auto& s = train.schema;
  const std::vector<NamedRule> rules = {{"none", std::nullopt},
                                        {"g1", parse_rule(kRuleG1, s)},
                                        {"g2", parse_rule(kRuleG2, s)},
                                        {"g3", parse_rule(kRuleG3, s)}};
  const auto report = rule_hierarchy(train, test, rules, 0.5, grid_config(128, 1));
  g_fingerprint += hierarchy_csv(report);
  std::string detail;
  for (std::size_t k = 0; k < report.entries.size(); ++k) {
    const auto& e = report.entries[k];
    detail += (k ? " > " : "") + e.name + " " + fixed(e.uncertain_fraction, 3);
    if (k > 0 && !(e.uncertain_fraction < report.entries[k - 1].uncertain_fraction)) fail(o, "");
  }
  o.detail = "uncertain fraction " + detail;
  return o;
}

using Results = std::vector<std::pair<int, Outcome>>;

Results run_all() {
  Results out;
  auto guarded = [&](int id, const std::function<Outcome()>& f) {
    try {
      out.emplace_back(id, f());
    } catch (const std::exception& e) {
      out.emplace_back(id, Outcome{false, std::string("exception: ") + e.what()});
    }
  };
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  OracleRun oracle_run;
  try {
    oracle_run = criteria4and5();
  } catch (const std::exception& e) {
    oracle_run.equivalence = {false, std::string("exception: ") + e.what()};
    oracle_run.normalization = oracle_run.equivalence;
  }
  out.emplace_back(4, oracle_run.equivalence);
  out.emplace_back(5, oracle_run.normalization);

  std::vector<std::pair<GrayImage, int>> mnist;
  GridData grid;
  try {
    mnist = load_mnist();
    grid.train = compose_grid_dataset(make_digit_pool(mnist, PoolPart::Train), 1000, 1);
    grid.test = compose_grid_dataset(make_digit_pool(mnist, PoolPart::Test), 2000, 2);
  } catch (const std::exception& e) {
    for (int id : {6, 7, 8}) out.emplace_back(id, Outcome{false, std::string("no data: ") + e.what()});
    return out;
  }
  guarded(6, [&] { return criterion6(grid); });
  guarded(7, [&] { return criterion7(grid); });
  guarded(8, [&] { return criterion8(mnist); });
  return out;
}

const char* kTitles[] = {"",
                         "illustrative example tables",
                         "inference on the example",
                         "rule update on the example",
                         "oracle equivalence",
                         "normalization",
                         "grid presence F1 over baseline",
                         "rule correction under label noise",
                         "rule hierarchy removes uncertainty",
                         "determinism"};

void print(int id, const Outcome& o) {
  std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, kTitles[id], o.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

// Exit status: 0 when the failing criteria are exactly the ones named by
// --expect-fail (comma separated, default none), 1 otherwise.
int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--fingerprint") {
    run_all();
    std::ofstream(argv[2], std::ios::binary) << g_fingerprint;
    return 0;
  }
  std::set<int> expected;
  if (argc == 3 && std::string(argv[1]) == "--expect-fail") {
    std::stringstream ss(argv[2]);
    std::string id;
    while (std::getline(ss, id, ',')) expected.insert(std::stoi(id));
  } else if (argc != 1) {
    std::fprintf(stderr, "usage: %s [--expect-fail <ids>]\n", argv[0]);
    return 2;
  }

  const Results results = run_all();
  std::set<int> failed;
  for (const auto& [id, o] : results) {
    print(id, o);
    if (!o.pass) failed.insert(id);
  }

  Outcome det;
  const std::string path = (std::filesystem::temp_directory_path() / "ficbl-acceptance-rerun.txt").string();
  const std::string cmd = std::string(argv[0]) + " --fingerprint " + path;
  if (std::system(cmd.c_str()) != 0) {
    fail(det, "rerun failed");
  } else {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string again = ss.str();
    std::filesystem::remove(path);
    if (again != g_fingerprint) {
      std::size_t at = 0;
      while (at < again.size() && at < g_fingerprint.size() && again[at] == g_fingerprint[at]) ++at;
      fail(det, "outputs differ at byte " + std::to_string(at));
    } else {
      det.detail = "rerun in a fresh process matches, " + std::to_string(g_fingerprint.size()) + " bytes";
    }
  }
  print(9, det);
  if (!det.pass) failed.insert(9);
  if (!expected.empty()) {
    std::string list;
    for (int id : expected) list += (list.empty() ? "" : ",") + std::to_string(id);
    std::printf("expected failures: %s; %s\n", list.c_str(), failed == expected ? "as expected" : "MISMATCH");
  }
  return failed == expected ? 0 : 1;
}
