#include "branchsel/ml.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "branchsel/errors.hpp"
#include "branchsel/rng.hpp"

namespace branchsel {

const char* model_kind_name(ModelKind k) { return k == ModelKind::Linear ? "linear" : "forest"; }

ModelKind parse_model_kind(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "linear") return ModelKind::Linear;
  if (key == "forest") return ModelKind::Forest;
  throw ValidationError("unknown model kind '" + std::string(text) + "'");
}

namespace {

std::size_t check_matrix(const Matrix& x, std::span<const double> y) {
  if (x.empty()) throw DegenerateDataError("no training rows");
  if (x.size() != y.size()) throw LengthMismatchError("design rows and labels differ in length");
  const std::size_t d = x.front().size();
  for (const auto& r : x) {
    if (r.size() != d) throw DimensionError("ragged design matrix");
  }
  return d;
}

}  // namespace

double LinearModel::predict(std::span<const double> z) const {
  if (z.size() != coefficients.size()) throw DimensionError("row dimension differs from the model");
  double v = intercept;
  for (std::size_t j = 0; j < z.size(); ++j) v += coefficients[j] * z[j];
  return v;
}

LinearModel fit_linear(const Matrix& x, std::span<const double> y) {
  const std::size_t d = check_matrix(x, y);
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(d) + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) a(i, static_cast<Eigen::Index>(j)) = x[static_cast<std::size_t>(i)][j];
    a(i, static_cast<Eigen::Index>(d)) = 1.0;
    b(i) = y[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd g = a.transpose() * a;
  const Eigen::VectorXd rhs = a.transpose() * b;
  LinearModel m;
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) {
    g.diagonal().array() += 1e-8;
    llt.compute(g);
    m.ridge = true;
  }
  const Eigen::VectorXd beta = llt.solve(rhs);
  m.coefficients.assign(beta.data(), beta.data() + d);
  m.intercept = beta(static_cast<Eigen::Index>(d));
  return m;
}

double RegressionTree::predict(std::span<const double> z) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const TreeNode& n = nodes[k];
    k = z[static_cast<std::size_t>(n.feature)] <= n.threshold ? k + 1 : static_cast<std::size_t>(n.right);
  }
  return nodes[k].value;
}

int RegressionTree::depth() const {
  int deepest = 0;
  std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [k, dep] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, dep);
    if (nodes[k].feature >= 0) {
      stack.push_back({k + 1, dep + 1});
      stack.push_back({static_cast<std::size_t>(nodes[k].right), dep + 1});
    }
  }
  return deepest;
}

double ForestModel::predict(std::span<const double> z) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(z);
  return sum / static_cast<double>(trees.size());
}

namespace {

class TreeGrower {
 public:
  TreeGrower(const Matrix& x, std::span<const double> y, Rng& rng, const ForestOptions& opt, std::size_t sample)
      : x_(x), y_(y), rng_(rng), opt_(opt), d_(x.front().size()), sample_(static_cast<double>(sample)) {
    mtry_ = std::max<std::size_t>(1, (d_ + 2) / 3);
  }

  RegressionTree grow(std::vector<std::size_t> rows) {
    build(rows, 0);
    return std::move(tree_);
  }

 private:
  void build(std::vector<std::size_t>& rows, int depth) {
    const std::size_t at = tree_.nodes.size();
    tree_.nodes.push_back({});
    double sum = 0.0, lo = y_[rows.front()], hi = lo;
    for (std::size_t i : rows) {
      sum += y_[i];
      lo = std::min(lo, y_[i]);
      hi = std::max(hi, y_[i]);
    }
    const double n = static_cast<double>(rows.size());
    const double mean = lo == hi ? lo : sum / n;
    tree_.nodes[at].value = mean;
    if (depth >= opt_.max_depth || static_cast<int>(rows.size()) < opt_.min_node || lo == hi || d_ == 0) return;
    double sse = 0.0;
    for (std::size_t i : rows) sse += (y_[i] - mean) * (y_[i] - mean);

    std::vector<std::size_t> feats(d_);
    std::iota(feats.begin(), feats.end(), 0);
    for (std::size_t i = 0; i < mtry_; ++i) std::swap(feats[i], feats[i + static_cast<std::size_t>(rng_.below(d_ - i))]);

    int best_f = -1;
    double best_sse = sse, best_thr = 0.0;
    std::vector<std::size_t> order = rows;
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = feats[k];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double xa = x_[a][f], xb = x_[b][f];
        return xa != xb ? xa < xb : a < b;
      });
      double ls = 0.0, lq = 0.0, rs = 0.0, rq = 0.0;
      for (std::size_t i : order) {
        rs += y_[i];
        rq += y_[i] * y_[i];
      }
      for (std::size_t p = 1; p < order.size(); ++p) {
        const double v = y_[order[p - 1]];
        ls += v;
        lq += v * v;
        rs -= v;
        rq -= v * v;
        const double a = x_[order[p - 1]][f], b = x_[order[p]][f];
        if (!(a < b)) continue;
        const double nl = static_cast<double>(p), nr = n - nl;
        const double total = std::max(0.0, lq - ls * ls / nl) + std::max(0.0, rq - rs * rs / nr);
        if (total < best_sse) {
          best_sse = total;
          best_f = static_cast<int>(f);
          best_thr = a + (b - a) / 2.0;
          if (!(best_thr < b)) best_thr = a;
        }
      }
    }
    if (best_f < 0) return;
    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (x_[i][static_cast<std::size_t>(best_f)] <= best_thr ? left : right).push_back(i);
    if (left.empty() || right.empty()) return;
    double child_sse = 0.0;
    for (const auto* side : {&left, &right}) {
      double s = 0.0;
      for (std::size_t i : *side) s += y_[i];
      const double m = s / static_cast<double>(side->size());
      for (std::size_t i : *side) child_sse += (y_[i] - m) * (y_[i] - m);
    }
    tree_.nodes[at].feature = best_f;
    tree_.nodes[at].threshold = best_thr;
    tree_.nodes[at].impurity_decrease = std::max(0.0, sse - child_sse) / sample_;
    rows.clear();
    rows.shrink_to_fit();
    build(left, depth + 1);
    tree_.nodes[at].right = static_cast<int>(tree_.nodes.size());
    build(right, depth + 1);
  }

  const Matrix& x_;
  std::span<const double> y_;
  Rng& rng_;
  const ForestOptions& opt_;
  std::size_t d_;
  std::size_t mtry_;
  double sample_;
  RegressionTree tree_;
};

}  // namespace

ForestModel fit_forest(const Matrix& x, std::span<const double> y, std::uint64_t seed, const ForestOptions& options) {
  check_matrix(x, y);
  if (options.n_trees < 1 || options.max_depth < 0) throw ValidationError("forest needs at least one tree and depth >= 0");
  ForestModel m;
  m.max_depth = options.max_depth;
  m.master_seed = seed;
  const std::size_t n = x.size();
  for (int t = 0; t < options.n_trees; ++t) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sample(n);
    for (auto& i : sample) i = static_cast<std::size_t>(rng.below(n));
    m.trees.push_back(TreeGrower(x, y, rng, options, n).grow(std::move(sample)));
  }
  return m;
}

std::size_t LearningSet::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  throw MissingFeatureError("no feature named " + std::string(name));
}

LearningSet learning_set(const Dataset& dataset) {
  LearningSet s;
  for (auto n : kFeatureNames) s.names.emplace_back(n);
  for (const auto& r : dataset.rows) {
    s.x.push_back(scale_features(r.features).with_nan());
    s.rows.push_back(r);
  }
  return s;
}

void add_feature(LearningSet& set, std::string name, std::span<const double> values) {
  if (values.size() != set.size()) throw LengthMismatchError("feature column length differs from the row count");
  if (std::find(set.names.begin(), set.names.end(), name) != set.names.end()) {
    throw ValidationError("duplicate feature " + name);
  }
  set.names.push_back(std::move(name));
  for (std::size_t i = 0; i < values.size(); ++i) set.x[i].push_back(values[i]);
}

const std::vector<std::string>& active_features(const Model& model) {
  return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.active_features; }, model);
}

const Preprocessor& model_preprocessor(const Model& model) {
  return std::visit([](const auto& m) -> const Preprocessor& { return m.preprocessor; }, model);
}

namespace {

double regress(const Model& model, std::span<const double> z) {
  return std::visit([&](const auto& m) { return m.predict(z); }, model);
}

}  // namespace

Model train_model(const LearningSet& set, std::span<const std::size_t> rows, const TrainOptions& options) {
  std::vector<std::string> names = options.features.empty() ? set.names : options.features;
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(set.column(n));
  Matrix raw;
  std::vector<double> y;
  for (std::size_t i : rows) {
    if (i >= set.size()) throw IndexError("training row out of range");
    std::vector<double> r;
    for (std::size_t c : cols) r.push_back(set.x[i][c]);
    raw.push_back(std::move(r));
    y.push_back(set.rows[i].label);
  }
  if (raw.empty()) throw DegenerateDataError("no training rows");
  Preprocessor pre = Preprocessor::fit(raw);
  Matrix z;
  z.reserve(raw.size());
  for (const auto& r : raw) z.push_back(pre.apply(r));
  if (options.kind == ModelKind::Linear) {
    LinearModel m = fit_linear(z, y);
    m.active_features = std::move(names);
    m.preprocessor = std::move(pre);
    return m;
  }
  ForestModel m = fit_forest(z, y, options.seed, options.forest);
  m.active_features = std::move(names);
  m.preprocessor = std::move(pre);
  return m;
}

double predict(const Model& model, std::span<const std::string> names, std::span<const double> values) {
  if (names.size() != values.size()) throw LengthMismatchError("feature names and values differ in length");
  std::vector<double> raw;
  for (const auto& f : active_features(model)) {
    const auto it = std::find(names.begin(), names.end(), f);
    if (it == names.end()) throw MissingFeatureError("input lacks feature " + f);
    raw.push_back(values[static_cast<std::size_t>(it - names.begin())]);
  }
  return regress(model, model_preprocessor(model).apply(raw));
}

double predict(const Model& model, const RawFeatureVector& x) {
  const RawFeatureVector scaled = x.scaled ? x : scale_features(x);
  const std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  return predict(model, names, scaled.with_nan());
}

std::vector<double> predict_rows(const Model& model, const LearningSet& set, std::span<const std::size_t> rows) {
  std::vector<std::size_t> cols;
  for (const auto& f : active_features(model)) cols.push_back(set.column(f));
  const Preprocessor& pre = model_preprocessor(model);
  std::vector<double> out;
  out.reserve(rows.size());
  std::vector<double> raw(cols.size());
  for (std::size_t i : rows) {
    for (std::size_t k = 0; k < cols.size(); ++k) raw[k] = set.x[i][cols[k]];
    out.push_back(regress(model, pre.apply(raw)));
  }
  return out;
}

ImportanceRanking importance(const Model& model) {
  const auto& names = active_features(model);
  std::vector<double> score(names.size(), 0.0);
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    for (std::size_t j = 0; j < score.size(); ++j) score[j] = std::abs(lin->coefficients[j]);
  } else {
    const auto& forest = std::get<ForestModel>(model);
    for (const auto& t : forest.trees) {
      for (const auto& n : t.nodes) {
        if (n.feature >= 0) score[static_cast<std::size_t>(n.feature)] += n.impurity_decrease;
      }
    }
    const double total = std::accumulate(score.begin(), score.end(), 0.0);
    if (total > 0.0) {
      for (double& s : score) s /= total;
    }
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  ImportanceRanking r;
  for (std::size_t j : order) {
    r.names.push_back(names[j]);
    r.scores.push_back(score[j]);
  }
  return r;
}

ImportanceRanking aggregate_rankings(std::span<const ImportanceRanking> rankings) {
  ImportanceRanking out;
  if (rankings.empty()) return out;
  std::vector<std::string> reference = rankings.front().names;
  std::sort(reference.begin(), reference.end());
  std::map<std::string, double> sums;
  for (const auto& r : rankings) {
    std::vector<std::string> names = r.names;
    std::sort(names.begin(), names.end());
    if (names != reference) throw MismatchedFeatureSetError("rankings cover different feature sets");
    for (std::size_t p = 0; p < r.names.size(); ++p) sums[r.names[p]] += static_cast<double>(p);
  }
  std::vector<std::pair<double, std::string>> order;
  for (const auto& [name, s] : sums) order.emplace_back(s, name);
  std::sort(order.begin(), order.end());
  for (const auto& [s, name] : order) {
    out.names.push_back(name);
    out.scores.push_back(s);
  }
  return out;
}

namespace {

struct SeedResult {
  EvalReport report;
  ImportanceRanking ranking;
};

// Runs fn(i) for i in [0, n) on up to jobs threads; the first error in index
// order is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<CurveRow> feature_reduction_experiment(const LearningSet& set, const ReductionOptions& options) {
  if (options.seeds.empty()) throw EmptyInputError("reduction needs at least one seed");
  std::vector<SplitIndices> splits;
  for (std::uint64_t s : options.seeds) splits.push_back(split_indices(set.rows, s, options.train_fraction, options.split_mode));
  std::vector<std::string> active = set.names;
  std::vector<CurveRow> curve;
  while (!active.empty()) {
    std::vector<SeedResult> results(options.seeds.size());
    parallel_for(options.seeds.size(), options.jobs, [&](std::size_t k) {
      TrainOptions t;
      t.kind = options.kind;
      t.seed = options.seeds[k];
      t.features = active;
      t.forest = options.forest;
      const Model m = train_model(set, splits[k].train, t);
      const std::vector<double> pred = predict_rows(m, set, splits[k].test);
      std::vector<DataPoint> test;
      for (std::size_t i : splits[k].test) test.push_back(set.rows[i]);
      results[k] = {make_report(pred, test, options.seeds[k]), importance(m)};
    });
    std::vector<double> acc, large, ratio, best;
    std::vector<ImportanceRanking> rankings;
    for (const auto& r : results) {
      acc.push_back(r.report.overall_accuracy);
      large.push_back(r.report.large_label_accuracy);
      ratio.push_back(r.report.sgm_predicted_ratio);
      best.push_back(r.report.sgm_virtual_best_ratio);
      rankings.push_back(r.ranking);
    }
    CurveRow row;
    row.d = static_cast<int>(active.size());
    row.acc = mean_sd(acc).mean;
    row.acc_large = mean_sd(large).mean;
    const MeanSd r = mean_sd(ratio);
    row.sgm_ratio = r.mean;
    row.sgm_ratio_sd = r.sd;
    row.sgm_virtual_best = mean_sd(best).mean;
    row.dropped = aggregate_rankings(rankings).names.back();
    active.erase(std::find(active.begin(), active.end(), row.dropped));
    curve.push_back(std::move(row));
  }
  return curve;
}

namespace {

std::string fmt9(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string curve_csv_header() { return "d,acc,acc_large,sgm_ratio,sgm_virtual_best,sgm_ratio_sd,dropped"; }

void write_curve_csv(std::ostream& out, std::span<const CurveRow> curve, std::span<const std::string> provenance) {
  for (const auto& p : provenance) out << "# " << p << '\n';
  out << curve_csv_header() << '\n';
  for (const auto& r : curve) {
    out << r.d << ',' << fmt9(r.acc) << ',' << fmt9(r.acc_large) << ',' << fmt9(r.sgm_ratio) << ','
        << fmt9(r.sgm_virtual_best) << ',' << fmt9(r.sgm_ratio_sd) << ',' << r.dropped << '\n';
  }
}

namespace {

void write_vector(std::ostream& out, const char* key, const std::vector<double>& v) {
  out << key;
  for (double x : v) out << ' ' << fmt17(x);
  out << '\n';
}

void write_tree(std::ostream& out, const RegressionTree& t, std::size_t k) {
  const TreeNode& n = t.nodes[k];
  if (n.feature < 0) {
    out << "L " << fmt17(n.value) << '\n';
    return;
  }
  out << "S " << n.feature << ' ' << fmt17(n.threshold) << ' ' << fmt17(n.value) << ' ' << fmt17(n.impurity_decrease)
      << '\n';
  write_tree(out, t, k + 1);
  write_tree(out, t, static_cast<std::size_t>(n.right));
}

}  // namespace

void write_model(std::ostream& out, const Model& model, std::span<const std::string> provenance) {
  for (const auto& p : provenance) out << "# " << p << '\n';
  out << "model v1\n";
  const bool linear = std::holds_alternative<LinearModel>(model);
  out << "kind " << (linear ? "linear" : "forest") << '\n';
  const auto& names = active_features(model);
  out << "features " << names.size();
  for (const auto& n : names) out << ' ' << n;
  out << '\n';
  const Preprocessor& pre = model_preprocessor(model);
  out << "preprocessor " << pre.fitted_on() << '\n';
  write_vector(out, "impute", pre.impute());
  write_vector(out, "mean", pre.mean());
  write_vector(out, "stddev", pre.stddev());
  out << "flat";
  for (char f : pre.flat()) out << ' ' << (f ? 1 : 0);
  out << '\n';
  if (linear) {
    const auto& m = std::get<LinearModel>(model);
    out << "intercept " << fmt17(m.intercept) << '\n';
    write_vector(out, "coefficients", m.coefficients);
    out << "ridge " << (m.ridge ? 1 : 0) << '\n';
    return;
  }
  const auto& m = std::get<ForestModel>(model);
  out << "trees " << m.trees.size() << " max_depth " << m.max_depth << " seed " << m.master_seed << '\n';
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    out << "tree " << t << ' ' << m.trees[t].nodes.size() << '\n';
    write_tree(out, m.trees[t], 0);
  }
}

namespace {

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  // Next non-comment line split into tokens; fails at end of input.
  std::istringstream line() {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty() || text.front() == '#') continue;
      return std::istringstream(text);
    }
    fail("unexpected end of model file");
  }

  std::istringstream keyed(const char* key) {
    std::istringstream s = line();
    std::string k;
    s >> k;
    if (k != key) fail(std::string("expected '") + key + "'");
    return s;
  }

  template <class T>
  T read(std::istringstream& s) {
    T v;
    if (!(s >> v)) fail("malformed value");
    return v;
  }

  double number(std::istringstream& s) {
    std::string tok = read<std::string>(s);
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("malformed number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("malformed number '" + tok + "'");
    }
  }

  std::vector<double> numbers(const char* key, std::size_t n) {
    std::istringstream s = keyed(key);
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(number(s));
    end(s);
    return v;
  }

  void end(std::istringstream& s) {
    std::string extra;
    if (s >> extra) fail("trailing token '" + extra + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  void tree(RegressionTree& t, std::size_t d, int depth, int max_depth) {
    if (depth > max_depth) fail("tree deeper than max_depth");
    std::istringstream s = line();
    const auto tag = read<std::string>(s);
    TreeNode n;
    if (tag == "L") {
      n.value = number(s);
      end(s);
      t.nodes.push_back(n);
      return;
    }
    if (tag != "S") fail("expected tree node");
    const int f = read<int>(s);
    if (f < 0 || static_cast<std::size_t>(f) >= d) fail("split feature out of range");
    n.feature = f;
    n.threshold = number(s);
    n.value = number(s);
    n.impurity_decrease = number(s);
    end(s);
    const std::size_t at = t.nodes.size();
    t.nodes.push_back(n);
    tree(t, d, depth + 1, max_depth);
    t.nodes[at].right = static_cast<int>(t.nodes.size());
    tree(t, d, depth + 1, max_depth);
  }

 private:
  std::istream& in_;
  int line_ = 0;
};

}  // namespace

Model read_model(std::istream& in) {
  ModelReader r(in);
  {
    std::istringstream s = r.line();
    std::string a, b;
    s >> a >> b;
    if (a != "model" || b != "v1") r.fail("expected 'model v1'");
    r.end(s);
  }
  std::istringstream ks = r.keyed("kind");
  const auto kind = r.read<std::string>(ks);
  r.end(ks);
  if (kind != "linear" && kind != "forest") r.fail("unknown model kind '" + kind + "'");
  std::istringstream fs = r.keyed("features");
  const auto d = r.read<std::size_t>(fs);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back(r.read<std::string>(fs));
  r.end(fs);
  std::istringstream ps = r.keyed("preprocessor");
  const int fitted_on = r.read<int>(ps);
  r.end(ps);
  std::vector<double> impute = r.numbers("impute", d);
  std::vector<double> mean = r.numbers("mean", d);
  std::vector<double> stddev = r.numbers("stddev", d);
  std::istringstream fl = r.keyed("flat");
  std::vector<char> flat;
  for (std::size_t i = 0; i < d; ++i) {
    const int f = r.read<int>(fl);
    if (f != 0 && f != 1) r.fail("flat flags must be 0 or 1");
    flat.push_back(static_cast<char>(f));
  }
  r.end(fl);
  Preprocessor pre;
  try {
    pre = Preprocessor::from_constants(std::move(impute), std::move(mean), std::move(stddev), std::move(flat), fitted_on);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  if (kind == "linear") {
    LinearModel m;
    std::istringstream is = r.keyed("intercept");
    m.intercept = r.number(is);
    r.end(is);
    m.coefficients = r.numbers("coefficients", d);
    std::istringstream rs = r.keyed("ridge");
    m.ridge = r.read<int>(rs) != 0;
    r.end(rs);
    m.active_features = std::move(names);
    m.preprocessor = std::move(pre);
    return m;
  }
  ForestModel m;
  std::istringstream ts = r.keyed("trees");
  const auto n_trees = r.read<std::size_t>(ts);
  std::string key;
  ts >> key;
  if (key != "max_depth") r.fail("expected 'max_depth'");
  m.max_depth = r.read<int>(ts);
  ts >> key;
  if (key != "seed") r.fail("expected 'seed'");
  m.master_seed = r.read<std::uint64_t>(ts);
  r.end(ts);
  if (n_trees == 0) r.fail("forest without trees");
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::istringstream hs = r.keyed("tree");
    if (r.read<std::size_t>(hs) != t) r.fail("trees out of order");
    const auto count = r.read<std::size_t>(hs);
    r.end(hs);
    RegressionTree tree;
    r.tree(tree, d, 0, m.max_depth);
    if (tree.nodes.size() != count) r.fail("tree node count mismatch");
    m.trees.push_back(std::move(tree));
  }
  m.active_features = std::move(names);
  m.preprocessor = std::move(pre);
  return m;
}

}  // namespace branchsel
