// Command-line front end: corpus generation, datasets, training, evaluation,
// the reduction sweep and single solves.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "branchsel/bnb.hpp"
#include "branchsel/datagen.hpp"
#include "branchsel/errors.hpp"
#include "branchsel/eval.hpp"
#include "branchsel/instance.hpp"
#include "branchsel/ml.hpp"

namespace fs = std::filesystem;
using namespace branchsel;

namespace {

constexpr const char* kVersion = "branchsel 1.0.0";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
  if (!out) throw ValidationError("write failed for " + p.string());
}

std::string comment_block(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "# " + l + "\n";
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Seeds as "a..b" or a comma-separated list.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ValidationError("malformed seed '" + s + "'");
    return static_cast<std::uint64_t>(v);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::uint64_t a = number(text.substr(0, dots)), b = number(text.substr(dots + 2));
    if (b < a) throw ValidationError("empty seed range");
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(number(part));
  if (out.empty()) throw ValidationError("no seeds given");
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

// Corpus files in name order; the provenance of the corpus manifest is kept.
std::vector<CorpusEntry> load_corpus(const fs::path& dir, std::vector<std::string>* provenance) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".minlp") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .minlp files in " + dir.string());
  std::vector<CorpusEntry> out;
  for (const auto& f : files) {
    try {
      out.push_back({f.stem().string(), parse_instance(read_file(f))});
    } catch (const ParseError& e) {
      throw ParseError(e.line(), f.filename().string() + ": " + e.what());
    }
  }
  if (provenance) {
    const fs::path manifest = dir / "corpus.txt";
    if (fs::exists(manifest)) {
      std::istringstream in(read_file(manifest));
      std::string line;
      while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) provenance->push_back("corpus " + line.substr(2));
      }
    }
    provenance->push_back("corpus instances " + std::to_string(out.size()));
  }
  return out;
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_dataset_csv(in);
}

int cmd_solve(const std::string& file, const std::string& rule_text, long work_limit) {
  const BranchRule rule = parse_rule(rule_text);
  const Instance inst = parse_instance(read_file(file));
  const auto [pre, summary] = presolve(inst);
  const SolveStats st = solve(pre, rule, work_limit);
  std::cout << "instance " << inst.name << "\n"
            << "rule " << rule_name(rule) << "\n"
            << "status " << solve_status_name(st.status) << "\n"
            << "objective " << (st.objective ? fmt(*st.objective) : std::string("none")) << "\n"
            << "dual_bound " << fmt(st.dual_bound) << "\n"
            << "work " << st.work << "\n"
            << "nodes " << st.nodes << "\n"
            << "lp_pivots " << st.lp_pivots << "\n"
            << "max_depth " << st.max_depth << "\n"
            << "integer_branches " << st.integer_branches << "\n"
            << "spatial_branches " << st.spatial_branches << "\n";
  if (!st.solution.empty()) {
    for (int j = 0; j < pre.n(); ++j) {
      std::cout << "x " << pre.variables[static_cast<std::size_t>(j)].name << " " << fmt(st.solution[static_cast<std::size_t>(j)])
                << "\n";
    }
  }
  return 0;
}

int cmd_gen_corpus(const std::vector<std::string>& families, int count, std::uint64_t seed, int min_size, int max_size,
                   const std::string& out_dir) {
  CorpusOptions o;
  if (!families.empty()) {
    o.families.clear();
    for (const auto& f : families) o.families.push_back(parse_family(f));
  }
  o.count = count;
  o.seed = seed;
  o.min_size = min_size;
  o.max_size = max_size;
  std::vector<std::string> fam;
  for (Family f : o.families) fam.emplace_back(family_name(f));
  const std::vector<std::string> prov = {kVersion,
                                         "command gen-corpus",
                                         "families " + join(fam, ","),
                                         "count " + std::to_string(count),
                                         "seed " + std::to_string(seed),
                                         "sizes " + std::to_string(min_size) + ".." + std::to_string(max_size)};
  const auto corpus = make_corpus(o);
  std::string manifest = comment_block(prov);
  for (const auto& e : corpus) {
    write_file(fs::path(out_dir) / (e.id + ".minlp"), comment_block(prov) + write_instance(e.instance));
    manifest += e.id + "\n";
  }
  write_file(fs::path(out_dir) / "corpus.txt", manifest);
  std::cout << "wrote " << corpus.size() << " instances to " << out_dir << "\n";
  return 0;
}

int cmd_make_dataset(const std::string& corpus_dir, int permutations, long work_limit, const std::string& out, int jobs,
                     bool keep_all) {
  std::vector<std::string> prov = {kVersion, "command make-dataset", "permutations " + std::to_string(permutations),
                                   "work_limit " + std::to_string(work_limit), std::string("filter ") + (keep_all ? "off" : "on")};
  const auto corpus = load_corpus(corpus_dir, &prov);
  if (permutations < 1) throw ValidationError("--permutations must be positive");
  Dataset ds = generate_dataset(corpus, {.permutations = permutations, .work_limit = work_limit, .jobs = jobs});
  int errors = 0;
  for (const auto& r : ds.rows) errors += !r.error.empty();
  if (!keep_all) {
    FilterReport rep;
    ds = filter_dataset(ds, &rep);
    std::string dropped;
    for (const auto& [reason, n] : rep.dropped) dropped += " " + reason + "=" + std::to_string(n);
    prov.push_back("kept " + std::to_string(rep.kept) + " dropped" + dropped);
    std::cerr << "kept " << rep.kept << " rows, dropped" << dropped << "\n";
  }
  ds.provenance = prov;
  std::ostringstream text;
  write_dataset_csv(text, ds);
  write_file(out, text.str());
  if (errors) std::cerr << errors << " rows failed; see the error column of an unfiltered run\n";
  return 0;
}

std::vector<std::string> parse_features(const std::string& text) {
  if (text == "all") return {};
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    if (std::find(kFeatureNames.begin(), kFeatureNames.end(), part) == kFeatureNames.end())
      throw ValidationError("unknown feature '" + part + "'");
    out.push_back(part);
  }
  if (out.empty()) throw ValidationError("empty feature list");
  return out;
}

int cmd_train(const std::string& data, const std::string& kind, std::uint64_t seed, const std::string& features,
              double train_fraction, int trees, const std::string& out) {
  const LearningSet set = learning_set(load_dataset(data));
  TrainOptions t;
  t.kind = parse_model_kind(kind);
  t.seed = seed;
  t.features = parse_features(features);
  t.forest.n_trees = trees;
  const SplitIndices sp = split_indices(set.rows, seed, train_fraction);
  const Model m = train_model(set, sp.train, t);
  const std::vector<std::string> prov = {kVersion,
                                         "command train",
                                         "data " + data,
                                         "model " + std::string(model_kind_name(t.kind)),
                                         "seed " + std::to_string(seed),
                                         "features " + features,
                                         "train_fraction " + fmt(train_fraction),
                                         "trees " + std::to_string(trees),
                                         "training rows " + std::to_string(sp.train.size())};
  std::ostringstream text;
  write_model(text, m, prov);
  write_file(out, text.str());
  return 0;
}

int cmd_evaluate(const std::string& data, const std::string& model_path, std::uint64_t split_seed, double train_fraction,
                 const std::string& csv_out) {
  const LearningSet set = learning_set(load_dataset(data));
  std::istringstream min(read_file(model_path));
  const Model m = read_model(min);
  const SplitIndices sp = split_indices(set.rows, split_seed, train_fraction);
  auto report = [&](const std::vector<std::size_t>& rows) -> std::optional<EvalReport> {
    if (rows.empty()) return std::nullopt;
    std::vector<DataPoint> part;
    for (std::size_t i : rows) part.push_back(set.rows[i]);
    return make_report(predict_rows(m, set, rows), part, split_seed);
  };
  const auto train = report(sp.train), test = report(sp.test);
  std::cout << "model " << model_path << " (" << (std::holds_alternative<LinearModel>(m) ? "linear" : "forest") << ", "
            << active_features(m).size() << " features), data " << data << ", split seed " << split_seed << "\n\n"
            << format_report_table(train, test);
  if (!csv_out.empty()) {
    std::string text = comment_block({kVersion, "command evaluate", "data " + data, "model " + model_path,
                                      "split_seed " + std::to_string(split_seed), "train_fraction " + fmt(train_fraction)});
    text += report_csv_header() + "\n";
    if (train) text += report_csv_row("train", *train) + "\n";
    if (test) text += report_csv_row("test", *test) + "\n";
    write_file(csv_out, text);
  }
  return 0;
}

int cmd_reduce(const std::string& data, const std::string& kind, const std::string& seeds, double train_fraction,
               int trees, int jobs, const std::string& out) {
  const LearningSet set = learning_set(load_dataset(data));
  ReductionOptions o;
  o.kind = parse_model_kind(kind);
  o.seeds = parse_seeds(seeds);
  o.jobs = jobs;
  o.train_fraction = train_fraction;
  o.forest.n_trees = trees;
  const auto curve = feature_reduction_experiment(set, o);
  const std::vector<std::string> prov = {kVersion,
                                         "command reduce",
                                         "data " + data,
                                         "model_kind " + std::string(model_kind_name(o.kind)),
                                         "seeds " + seeds,
                                         "train_fraction " + fmt(train_fraction),
                                         "trees " + std::to_string(trees),
                                         "rows " + std::to_string(set.size())};
  std::ostringstream text;
  write_curve_csv(text, curve, prov);
  write_file(out, text.str());
  return 0;
}

int cmd_compare_rules(const std::string& corpus_dir, long work_limit, const std::string& out) {
  std::vector<std::string> prov = {kVersion, "command compare-rules", "work_limit " + std::to_string(work_limit)};
  const auto corpus = load_corpus(corpus_dir, &prov);
  constexpr BranchRule rules[] = {BranchRule::Mixed, BranchRule::PreferInt, BranchRule::PreferSpatial};
  std::map<BranchRule, std::vector<double>> works;
  std::map<BranchRule, int> limited;
  std::string rows = "instance_id,work_mixed,work_preferint,work_preferspatial\n";
  for (const auto& e : corpus) {
    const auto [pre, summary] = presolve(e.instance);
    rows += e.id;
    for (BranchRule r : rules) {
      const SolveStats st = solve(pre, r, work_limit);
      const long w = std::min(st.work, work_limit);
      works[r].push_back(static_cast<double>(w));
      limited[r] += st.status == SolveStatus::WorkLimit;
      rows += "," + std::to_string(w);
    }
    rows += "\n";
  }
  const double base = sgm(works[BranchRule::Mixed]);
  std::ostringstream table;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %10s\n", "rule", "sgm work", "ratio", "limited");
  table << buf;
  for (BranchRule r : rules) {
    const double s = sgm(works[r]);
    std::snprintf(buf, sizeof buf, "%-16s %12.1f %12.3f %10d\n", rule_name(r), s, s / base, limited[r]);
    table << buf;
  }
  std::cout << corpus.size() << " instances, work limit " << work_limit << ", ratios against mixed\n\n" << table.str();
  if (!out.empty()) write_file(out, comment_block(prov) + rows);
  return 0;
}

template <typename Parse>
CLI::Validator parses_with(Parse parse, const char* what) {
  return CLI::Validator(
      [parse, what](std::string& s) -> std::string {
        try {
          parse(s);
        } catch (const Error&) {
          return std::string("invalid ") + what + " '" + s + "'";
        }
        return {};
      },
      what);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching-rule selection for nonconvex MINLP branch-and-bound"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string file, rule = "mixed";
  long work_limit = 1000000;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one instance file and print statistics");
  solve_cmd->add_option("file", file, "Instance file")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--rule", rule, "preferint, mixed or preferspatial")->check(parses_with(parse_rule, "RULE"));
  solve_cmd->add_option("--work-limit", work_limit, "Work limit")->check(CLI::PositiveNumber);

  std::vector<std::string> families;
  int count = 200, min_size = 4, max_size = 10;
  std::uint64_t seed = 1;
  std::string out;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic instance corpus");
  gen->add_option("--families", families, "Families (default all)")->delimiter(',')->check(parses_with(parse_family, "FAMILY"));
  gen->add_option("--count", count, "Number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Corpus seed");
  gen->add_option("--min-size", min_size, "Smallest number of variables")->check(CLI::Range(kMinSyntheticSize, kMaxSyntheticSize));
  gen->add_option("--max-size", max_size, "Largest number of variables")->check(CLI::Range(kMinSyntheticSize, kMaxSyntheticSize));
  gen->add_option("--out", out, "Output directory")->required();

  std::string corpus;
  int permutations = 2, jobs = 1;
  long ds_work_limit = 20000;
  bool keep_all = false;
  auto* mk = app.add_subcommand("make-dataset", "Solve a corpus under both rules and write the dataset CSV");
  mk->add_option("--corpus", corpus, "Corpus directory")->required();
  mk->add_option("--permutations", permutations, "Permutations per instance")->check(CLI::PositiveNumber);
  mk->add_option("--work-limit", ds_work_limit, "Work limit per solve")->check(CLI::PositiveNumber);
  mk->add_option("--out", out, "Output CSV")->required();
  mk->add_option("--jobs", jobs, "Parallel rows")->check(CLI::PositiveNumber);
  mk->add_flag("--keep-all", keep_all, "Skip filtering");

  std::string data, model_kind = "linear", features = "all";
  double train_fraction = 0.8;
  int trees = 100;
  auto* train = app.add_subcommand("train", "Fit a model on the training split");
  train->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--model", model_kind, "linear or forest")->check(parses_with(parse_model_kind, "KIND"));
  train->add_option("--seed", seed, "Split and model seed");
  train->add_option("--features", features, "Comma-separated features or all")->check(parses_with(parse_features, "FEATURES"));
  train->add_option("--train-fraction", train_fraction, "Share of instances used for training")->check(CLI::Range(0.0, 1.0));
  train->add_option("--trees", trees, "Forest size")->check(CLI::PositiveNumber);
  train->add_option("--out", out, "Model file")->required();

  std::string model_path, csv_out;
  std::uint64_t split_seed = 1;
  auto* ev = app.add_subcommand("evaluate", "Print the accuracy and time-factor report of a model");
  ev->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split-seed", split_seed, "Split seed");
  ev->add_option("--train-fraction", train_fraction, "Share of instances in the train column")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--csv", csv_out, "Also write the report as CSV");

  std::string seeds = "1..100";
  auto* red = app.add_subcommand("reduce", "Feature-reduction sweep averaged over seeds");
  red->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  red->add_option("--model-kind", model_kind, "linear or forest")->check(parses_with(parse_model_kind, "KIND"));
  red->add_option("--seeds", seeds, "Seed range a..b or list")->check(parses_with(parse_seeds, "SEEDS"));
  red->add_option("--train-fraction", train_fraction, "Share of instances used for training")->check(CLI::Range(0.0, 1.0));
  red->add_option("--trees", trees, "Forest size")->check(CLI::PositiveNumber);
  red->add_option("--jobs", jobs, "Parallel seeds")->check(CLI::PositiveNumber);
  red->add_option("--out", out, "Curve CSV")->required();

  long cmp_work_limit = 20000;
  auto* cmp = app.add_subcommand("compare-rules", "Work of all three rules on a corpus");
  cmp->add_option("--corpus", corpus, "Corpus directory")->required();
  cmp->add_option("--work-limit", cmp_work_limit, "Work limit per solve")->check(CLI::PositiveNumber);
  cmp->add_option("--out", out, "Per-instance CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve_cmd) return cmd_solve(file, rule, work_limit);
    if (*gen) {
      if (min_size > max_size) throw CLI::ValidationError("--min-size", "larger than --max-size");
      return cmd_gen_corpus(families, count, seed, min_size, max_size, out);
    }
    if (*mk) return cmd_make_dataset(corpus, permutations, ds_work_limit, out, jobs, keep_all);
    if (*train) return cmd_train(data, model_kind, seed, features, train_fraction, trees, out);
    if (*ev) return cmd_evaluate(data, model_path, split_seed, train_fraction, csv_out);
    if (*red) return cmd_reduce(data, model_kind, seeds, train_fraction, trees, jobs, out);
    if (*cmp) return cmd_compare_rules(corpus, cmp_work_limit, out);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.get_name() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
