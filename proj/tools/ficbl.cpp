#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ficbl/ficbl.hpp"

namespace fs = std::filesystem;
using namespace ficbl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitRule = 5;

std::pair<std::size_t, std::size_t> parse_pair(const std::string& text, const char* what) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw DomainError("");
    std::size_t a_end = 0, b_end = 0;
    const auto a = std::stoul(text.substr(0, x), &a_end);
    const auto b = std::stoul(text.substr(x + 1), &b_end);
    if (a_end != x || b_end != text.size() - x - 1 || a == 0 || b == 0) throw DomainError("");
    return {a, b};
  } catch (const std::exception&) {
    throw DomainError(std::string(what) + " must look like <w>x<h>, got '" + text + "'");
  }
}

std::string find_idx(const std::string& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    for (const char* ext : {"", ".gz"}) {
      const fs::path p = fs::path(dir) / (std::string(n) + ext);
      if (fs::exists(p)) return p.string();
    }
  }
  throw IoError("no IDX file like '" + std::string(*names.begin()) + "' in '" + dir + "'");
}

std::vector<std::pair<GrayImage, int>> load_source(const std::string& dir) {
  const auto images = find_idx(dir, {"images-idx3-ubyte", "train-images-idx3-ubyte", "images.idx"});
  const auto labels = find_idx(dir, {"labels-idx1-ubyte", "train-labels-idx1-ubyte", "labels.idx"});
  return load_idx(images, labels);
}

std::vector<double> parse_betas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() == 1) return {parse_real(parts[0])};
  if (parts.size() != 3) throw DomainError("--betas must be <start>:<stop>:<step>");
  const double start = parse_real(parts[0]);
  const double stop = parse_real(parts[1]);
  const double step = parse_real(parts[2]);
  if (!(step > 0.0)) throw DomainError("--betas step must be positive");
  if (stop < start) throw DomainError("--betas must be ascending");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
  std::vector<double> out;
  for (std::size_t k = 0; k <= n; ++k) out.push_back(start + static_cast<double>(k) * step);
  for (double b : out) {
    if (b < 0.0 || b > 1.0 + 1e-12) throw DomainError("--betas values must lie in [0, 1]");
  }
  out.back() = std::min(out.back(), 1.0);
  return out;
}

std::vector<double> parse_thresholds(const std::string& text, const ConceptSchema& schema) {
  std::vector<double> out(schema.size(), -1.0);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DomainError("threshold '" + item + "' must be <concept>=<value>");
    const std::string name = item.substr(0, eq);
    std::optional<std::size_t> r = schema.find(name);
    if (!r && name.size() > 1 && name[0] == 'c' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const auto idx = std::stoul(name.substr(1));
      if (idx < schema.size()) r = idx;
    }
    if (!r) throw DomainError("unknown concept '" + name + "' in thresholds");
    const double t = parse_real(item.substr(eq + 1));
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("thresholds must lie in [0, 1]");
    out[*r] = t;
  }
  return out;
}

struct PipelineFlags {
  std::string patch = "28x28";
  std::string stride;
  std::size_t embed_dim = 16;
  std::size_t clusters = 80;
  std::string algorithm = "em";
  std::uint64_t seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--patch", patch, "patch size <w>x<h>")->capture_default_str();
    cmd->add_option("--stride", stride, "stride <x>x<y> (default: the patch size)");
    cmd->add_option("--embed-dim", embed_dim, "embedding dimension")->capture_default_str();
    cmd->add_option("--clusters", clusters, "number of clusters")->capture_default_str();
    cmd->add_option("--cluster-alg", algorithm, "kmeans or em")
        ->check(CLI::IsMember({"kmeans", "em"}))
        ->capture_default_str();
  }

  TrainConfig config() const {
    TrainConfig cfg;
    const auto [pw, ph] = parse_pair(patch, "--patch");
    const auto [sx, sy] = parse_pair(stride.empty() ? patch : stride, "--stride");
    cfg.patch = {pw, ph, sx, sy};
    if (embed_dim == 0) throw DomainError("--embed-dim must be positive");
    if (clusters == 0) throw DomainError("--clusters must be positive");
    cfg.embed_dim = embed_dim;
    cfg.clusters = clusters;
    cfg.algorithm = algorithm == "kmeans" ? ClusterAlgorithm::KMeans : ClusterAlgorithm::Em;
    cfg.seed = seed;
    return cfg;
  }
};

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<RuleExpr> read_rules(const std::string& path, const ConceptSchema& schema) {
  if (path.empty()) return {};
  return load_rules_file(path, schema);
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ficbl: frequentist concept-based learning on image patches"};
  app.require_subcommand(1);

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "build a concept-labelled dataset from MNIST IDX files");
  std::string mk_source, mk_kind, mk_out, mk_pool = "all";
  std::size_t mk_n = 0;
  std::uint64_t mk_seed = 0;
  mk->add_option("--source", mk_source, "directory with images/labels IDX files")->required();
  mk->add_option("--kind", mk_kind, "grid4 or annotated")
      ->required()
      ->check(CLI::IsMember({"grid4", "annotated"}));
  mk->add_option("--n", mk_n, "number of images")->required();
  mk->add_option("--seed", mk_seed, "random seed")->required();
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->add_option("--pool", mk_pool, "source digits to draw from: all, train (even positions), test (odd)")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "fit embedder, clusters and counts");
  std::string tr_data, tr_out;
  PipelineFlags tr_flags;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "model file")->required();
  tr->add_option("--seed", tr_flags.seed, "random seed")->required();
  tr_flags.add(tr);

  // predict
  auto* pr = app.add_subcommand("predict", "posterior concept probabilities per image");
  std::string pr_model, pr_data, pr_rules, pr_thresholds, pr_out;
  double pr_epsilon = kDefaultEpsilon;
  pr->add_option("--model", pr_model, "model file")->required();
  pr->add_option("--data", pr_data, "dataset directory")->required();
  pr->add_option("--rules", pr_rules, "rules file, one rule per line");
  pr->add_option("--epsilon", pr_epsilon, "substitute for zero conditionals")->capture_default_str();
  pr->add_option("--thresholds", pr_thresholds, "c0=0.5,c1=0.6,... (default: arg-max)");
  pr->add_option("--out", pr_out, "output CSV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "per-concept macro F1 on a labelled dataset");
  std::string ev_model, ev_data, ev_rules, ev_out;
  double ev_epsilon = kDefaultEpsilon;
  ev->add_option("--model", ev_model, "model file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--rules", ev_rules, "rules file, one rule per line");
  ev->add_option("--epsilon", ev_epsilon, "substitute for zero conditionals")->capture_default_str();
  ev->add_option("--out", ev_out, "report directory")->required();

  // sweep-beta
  auto* sw = app.add_subcommand("sweep-beta", "target F1 against label-inversion fraction, with and without a rule");
  std::string sw_data, sw_test, sw_rule, sw_betas, sw_out;
  std::size_t sw_seeds = 3;
  double sw_epsilon = kDefaultEpsilon;
  PipelineFlags sw_flags;
  sw->add_option("--data", sw_data, "training dataset directory")->required();
  sw->add_option("--test", sw_test, "clean test dataset directory (default: --data)");
  sw->add_option("--rule", sw_rule, "expert rule")->required();
  sw->add_option("--betas", sw_betas, "<start>:<stop>:<step>")->required();
  sw->add_option("--seeds", sw_seeds, "seeds 1..k")->capture_default_str();
  sw->add_option("--epsilon", sw_epsilon, "substitute for zero conditionals")->capture_default_str();
  sw->add_option("--out", sw_out, "report directory")->required();
  sw_flags.add(sw);

  // hierarchy
  auto* hi = app.add_subcommand("hierarchy", "target posterior histograms under none/g1/g2/g3 on annotated data");
  std::string hi_data, hi_test, hi_out;
  double hi_beta = 0.5, hi_epsilon = kDefaultEpsilon;
  std::size_t hi_bins = 10;
  PipelineFlags hi_flags;
  hi->add_option("--data", hi_data, "annotated training dataset directory")->required();
  hi->add_option("--test", hi_test, "clean test dataset directory (default: --data)");
  hi->add_option("--beta", hi_beta, "fraction of inverted targets")->capture_default_str();
  hi->add_option("--bins", hi_bins, "histogram bins")->capture_default_str();
  hi->add_option("--seed", hi_flags.seed, "random seed")->required();
  hi->add_option("--epsilon", hi_epsilon, "substitute for zero conditionals")->capture_default_str();
  hi->add_option("--out", hi_out, "report directory")->required();
  hi_flags.add(hi);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*mk) {
      const auto source = load_source(mk_source);
      const PoolPart part = mk_pool == "train" ? PoolPart::Train
                            : mk_pool == "test" ? PoolPart::Test
                                                : PoolPart::All;
      const DigitPool pool = make_digit_pool(source, part);
      const Dataset data = mk_kind == "grid4" ? compose_grid_dataset(pool, mk_n, mk_seed)
                                              : make_annotated_dataset(pool, mk_n, mk_seed);
      save_dataset(mk_out, data);
    } else if (*tr) {
      const TrainConfig cfg = tr_flags.config();
      const Dataset data = load_dataset(tr_data);
      save_model(tr_out, train(data, cfg));
    } else if (*pr) {
      const TrainedModel model = load_model(pr_model);
      const Dataset data = load_dataset(pr_data);
      if (!(data.schema == model.schema())) throw DomainError("dataset schema differs from the model's");
      const ProbabilityModel pm = effective_model(model, read_rules(pr_rules, model.schema()));
      const auto thresholds = pr_thresholds.empty() ? std::vector<double>(model.schema().size(), -1.0)
                                                    : parse_thresholds(pr_thresholds, model.schema());
      const auto occ = occupancies(model.features, data);
      std::ostringstream out;
      out << "image,concept,row,value,posterior\n";
      for (std::size_t i = 0; i < occ.size(); ++i) {
        const Prediction p = predict(pm, occ[i], pr_epsilon);
        for (std::size_t r = 0; r < pm.schema.size(); ++r) {
          const auto& name = csv_quote(pm.schema.name(r));
          for (std::size_t k = 0; k < p.posterior[r].size(); ++k) {
            out << i << ',' << name << ",posterior," << k + 1 << ',' << format_real(p.posterior[r][k]) << '\n';
          }
          std::vector<int> assigned;
          if (thresholds[r] < 0.0) {
            assigned.push_back(p.argmax(r));
          } else {
            for (std::size_t k = 0; k < p.posterior[r].size(); ++k) {
              if (p.posterior[r][k] >= thresholds[r]) assigned.push_back(static_cast<int>(k) + 1);
            }
          }
          out << i << ',' << name << ",assigned,";
          for (std::size_t k = 0; k < assigned.size(); ++k) out << (k ? ";" : "") << assigned[k];
          out << ",\n";
        }
      }
      write_text_file(pr_out, out.str());
    } else if (*ev) {
      const TrainedModel model = load_model(ev_model);
      const Dataset data = load_dataset(ev_data);
      if (!(data.schema == model.schema())) throw DomainError("dataset schema differs from the model's");
      const auto rules = read_rules(ev_rules, model.schema());
      const ProbabilityModel pm = effective_model(model, rules);
      const Evaluation result = evaluate(pm, occupancies(model.features, data), data, ev_epsilon);
      std::string tag = serialize_model(model);
      for (const auto& g : rules) tag += "\n" + to_string(g, model.schema());
      const std::string hash = config_hash(tag);
      std::ostringstream csv, txt;
      csv << "# f1: " << kF1Averaging << "\n# images: " << data.size() << "\nconcept,name,macro_f1\n";
      txt << "evaluation on " << data.size() << " images\n  f1: " << kF1Averaging << "\n\n";
      for (std::size_t r = 0; r < pm.schema.size(); ++r) {
        csv << r << ',' << csv_quote(pm.schema.name(r)) << ',' << format_real(result.f1[r]) << '\n';
        char line[160];
        std::snprintf(line, sizeof(line), "  %-12s %.4f\n", pm.schema.name(r).c_str(), result.f1[r]);
        txt << line;
      }
      make_dir(ev_out);
      write_text_file((fs::path(ev_out) / ("eval-" + hash + ".csv")).string(), csv.str());
      write_text_file((fs::path(ev_out) / ("eval-" + hash + ".txt")).string(), txt.str());
    } else if (*sw) {
      const auto betas = parse_betas(sw_betas);
      if (sw_seeds == 0) throw DomainError("--seeds must be positive");
      const TrainConfig cfg = sw_flags.config();
      const Dataset train_data = load_dataset(sw_data);
      const Dataset test_data = sw_test.empty() ? train_data : load_dataset(sw_test);
      if (!(train_data.schema == test_data.schema)) throw DomainError("train and test schemas differ");
      const RuleExpr rule = parse_rule(sw_rule, train_data.schema);
      std::vector<std::uint64_t> seeds;
      for (std::uint64_t s = 1; s <= sw_seeds; ++s) seeds.push_back(s);
      const SweepReport report = sweep_beta(train_data, test_data, rule, betas, cfg, seeds, sw_epsilon);
      const std::string hash =
          config_hash(config_string(cfg) + "|" + report.rule + "|" + sw_betas + "|" + sw_data + "|" + sw_test);
      const std::string stem = "sweep-" + hash + "-seeds1-" + std::to_string(sw_seeds);
      make_dir(sw_out);
      write_text_file((fs::path(sw_out) / (stem + ".csv")).string(), sweep_csv(report));
      write_text_file((fs::path(sw_out) / (stem + ".txt")).string(), sweep_summary(report));
    } else if (*hi) {
      const TrainConfig cfg = hi_flags.config();
      const Dataset train_data = load_dataset(hi_data);
      const Dataset test_data = hi_test.empty() ? train_data : load_dataset(hi_test);
      if (!(train_data.schema == annotated_schema()) || !(test_data.schema == annotated_schema())) {
        throw DomainError("hierarchy needs annotated datasets");
      }
      const auto& schema = train_data.schema;
      const std::vector<NamedRule> rules = {
          {"none", std::nullopt},
          {"g1", parse_rule(kRuleG1, schema)},
          {"g2", parse_rule(kRuleG2, schema)},
          {"g3", parse_rule(kRuleG3, schema)},
      };
      const HierarchyReport report = rule_hierarchy(train_data, test_data, rules, hi_beta, cfg, hi_bins, hi_epsilon);
      const std::string hash = config_hash(config_string(cfg) + "|" + format_real(hi_beta) + "|" + hi_data + "|" + hi_test);
      const std::string stem = "hierarchy-" + hash + "-seed" + std::to_string(cfg.seed);
      make_dir(hi_out);
      write_text_file((fs::path(hi_out) / (stem + ".csv")).string(), hierarchy_csv(report));
      write_text_file((fs::path(hi_out) / (stem + ".txt")).string(), hierarchy_summary(report));
    }
  } catch (const RuleInconsistentError& e) {
    std::cerr << "ficbl: " << e.what() << '\n';
    return kExitRule;
  } catch (const NumericError& e) {
    std::cerr << "ficbl: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "ficbl: " << e.what() << '\n';
    return kExitIo;
  } catch (const DomainError& e) {
    std::cerr << "ficbl: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
