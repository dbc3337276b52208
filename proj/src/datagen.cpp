#include "branchsel/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include <Eigen/Dense>

#include "branchsel/errors.hpp"
#include "branchsel/rng.hpp"

namespace branchsel {

const char* family_name(Family f) {
  switch (f) {
    case Family::BilinearKnapsack: return "BILINEAR_KNAPSACK";
    case Family::ConcaveMin: return "CONCAVE_MIN";
    case Family::MixedQp: return "MIXED_QP";
    case Family::BoxqpInt: return "BOXQP_INT";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  std::string norm;
  for (char c : text) norm.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (Family f : kAllFamilies) {
    if (norm == family_name(f)) return f;
  }
  throw ValidationError("unknown family " + std::string(text));
}

namespace {

double quantize(double v, double q) { return std::round(v / q) * q; }

// Accumulates the objective expression f of an epigraph model min t, f(x) - t <= 0.
class Builder {
 public:
  Builder(std::string name, Rng& rng) : rng_(rng) { inst_.name = std::move(name); }

  int add_var(std::string prefix, double lb, double ub, bool integer) {
    const int j = inst_.n();
    inst_.variables.push_back({prefix + std::to_string(j), lb, ub, integer});
    return j;
  }

  Instance& inst() { return inst_; }
  Rng& rng() { return rng_; }
  std::vector<int>& ints() { return ints_; }
  std::vector<int>& conts() { return conts_; }

  void split(int size, double int_share, auto make_int, auto make_cont) {
    const int ni = std::clamp(static_cast<int>(std::lround(int_share * size)), 1, size - 1);
    for (int k = 0; k < size; ++k) {
      if (k < ni) {
        ints_.push_back(make_int());
      } else {
        conts_.push_back(make_cont());
      }
    }
  }

  void linear(int j, double c) {
    if (c != 0.0) terms_.push_back(inst_.dag.add_mul(inst_.dag.add_const(c), inst_.dag.add_var(j)));
  }
  void product(int i, int j, double c) {
    if (c == 0.0) return;
    hessian_[{std::min(i, j), std::max(i, j)}] += i == j ? 2.0 * c : c;
    ExprDag& d = inst_.dag;
    const NodeId p = i == j ? d.add_square(d.add_var(i)) : d.add_mul(d.add_var(i), d.add_var(j));
    terms_.push_back(c == 1.0 ? p : d.add_mul(d.add_const(c), p));
  }
  // Adds a concave square on the first continuous variable when f is convex.
  void ensure_nonconvex() {
    const int n = inst_.n();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [ij, v] : hessian_) {
      h(ij.first, ij.second) = v;
      h(ij.second, ij.first) = v;
    }
    if (n > 0 && Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues()(0) < -1e-9) return;
    const int y = conts_.front();
    const auto it = hessian_.find({y, y});
    const double hyy = it == hessian_.end() ? 0.0 : it->second;
    product(y, y, -(std::floor(std::max(hyy, 0.0)) / 2.0 + 1.0));
  }

  void row(std::string name, std::vector<Term> terms, Sense sense, double rhs) {
    std::erase_if(terms, [](const Term& t) { return t.coef == 0.0; });
    if (terms.empty()) return;
    inst_.linear_rows.push_back({std::move(name), std::move(terms), sense, rhs});
  }

  // Finishes with t bounded by an interval enclosure of f over the box.
  Instance finish() {
    ExprDag& d = inst_.dag;
    const NodeId f = terms_.size() == 1 ? terms_.front() : d.add_sum(terms_);
    const Interval range = interval_eval(d, f, inst_.bounds());
    const int t = add_var("t", std::floor(range.lo) - 1.0, std::ceil(range.hi) + 1.0, false);
    inst_.objective.push_back({t, 1.0});
    inst_.add_nonlinear("epi", d.add_sub(f, d.add_var(t)), Sense::Le, 0.0);
    for (std::size_t k = 0; k < pending_.size(); ++k) {
      inst_.add_nonlinear("q" + std::to_string(k), pending_[k], Sense::Le, pending_rhs_[k]);
    }
    inst_.validate();
    return std::move(inst_);
  }

  void nonlinear_constraint(NodeId body, double rhs) {
    pending_.push_back(body);
    pending_rhs_.push_back(rhs);
  }

 private:
  Instance inst_;
  Rng& rng_;
  std::vector<NodeId> terms_;
  std::vector<int> ints_, conts_;
  std::vector<NodeId> pending_;
  std::vector<double> pending_rhs_;
  std::map<std::pair<int, int>, double> hessian_;
};

// Random point of the box with integral integer coordinates.
std::vector<double> random_point(const Instance& inst, Rng& rng) {
  std::vector<double> x;
  for (const auto& v : inst.variables) {
    x.push_back(v.is_integer ? static_cast<double>(rng.integer(static_cast<int>(v.lb), static_cast<int>(v.ub)))
                             : quantize(rng.uniform(v.lb, v.ub), 0.25));
  }
  return x;
}

double activity(const std::vector<Term>& terms, const std::vector<double>& x) {
  double a = 0.0;
  for (const Term& t : terms) a += t.coef * x[static_cast<std::size_t>(t.var)];
  return a;
}

// Products between integer and continuous variables, integer and integer,
// and continuous pairs, each included with its own probability.
void random_products(Builder& b, double p_int_cont, double p_cont_cont, double p_int_int, double lo, double hi) {
  Rng& r = b.rng();
  for (int i : b.ints()) {
    for (int j : b.conts()) {
      if (r.bernoulli(p_int_cont)) b.product(i, j, quantize(r.uniform(lo, hi), 0.5));
    }
  }
  for (std::size_t a = 0; a < b.conts().size(); ++a) {
    for (std::size_t c = a + 1; c < b.conts().size(); ++c) {
      if (r.bernoulli(p_cont_cont)) b.product(b.conts()[a], b.conts()[c], quantize(r.uniform(lo, hi), 0.5));
    }
  }
  for (std::size_t a = 0; a < b.ints().size(); ++a) {
    for (std::size_t c = a + 1; c < b.ints().size(); ++c) {
      if (r.bernoulli(p_int_int)) b.product(b.ints()[a], b.ints()[c], quantize(r.uniform(lo, hi), 0.5));
    }
  }
}

Instance bilinear_knapsack(Builder& b, int size) {
  Rng& r = b.rng();
  const int ymax = 3;
  b.split(size, r.uniform(0.25, 0.8), [&] { return b.add_var("x", 0, r.integer(1, 3), true); },
          [&] { return b.add_var("y", 0, r.integer(1, ymax), false); });
  const double coupling = r.uniform(0.1, 0.9);
  for (int i : b.ints()) b.linear(i, -quantize(r.uniform(1.0, 5.0), 0.5));
  for (int j : b.conts()) b.linear(j, quantize(r.uniform(-2.0, 2.0), 0.5));
  random_products(b, coupling, r.uniform(0.0, 0.6), 0.0, -3.0, -0.5);
  b.ensure_nonconvex();

  std::vector<Term> knap;
  double total = 0.0;
  for (int j = 0; j < b.inst().n(); ++j) {
    const double w = quantize(r.uniform(1.0, 4.0), 0.5);
    knap.push_back({j, w});
    total += w * b.inst().variables[static_cast<std::size_t>(j)].ub;
  }
  b.row("cap", knap, Sense::Le, quantize(r.uniform(0.3, 0.6) * total, 0.5));
  if (r.bernoulli(0.5)) {
    ExprDag& d = b.inst().dag;
    std::vector<NodeId> prods;
    double bound = 0.0;
    for (int i : b.ints()) {
      const int j = b.conts()[r.below(b.conts().size())];
      prods.push_back(d.add_mul(d.add_var(i), d.add_var(j)));
      bound += b.inst().variables[static_cast<std::size_t>(i)].ub * b.inst().variables[static_cast<std::size_t>(j)].ub;
    }
    const NodeId body = prods.size() == 1 ? prods.front() : d.add_sum(prods);
    b.nonlinear_constraint(body, quantize(r.uniform(0.2, 0.5) * bound, 0.5));
  }
  return b.finish();
}

Instance concave_min(Builder& b, int size) {
  Rng& r = b.rng();
  b.split(size, r.uniform(0.2, 0.8), [&] { return b.add_var("x", 0, r.integer(1, 4), true); },
          [&] {
            const double lo = r.integer(-2, 0);
            return b.add_var("y", lo, lo + r.integer(1, 3), false);
          });
  for (int j : b.conts()) {
    b.product(j, j, -quantize(r.uniform(0.5, 3.0), 0.5));
    b.linear(j, quantize(r.uniform(-3.0, 3.0), 0.5));
  }
  const double int_curv = r.uniform(0.0, 1.0);
  for (int i : b.ints()) {
    b.linear(i, quantize(r.uniform(-4.0, 2.0), 0.5));
    if (r.bernoulli(int_curv)) b.product(i, i, -quantize(r.uniform(0.5, 2.0), 0.5));
  }
  random_products(b, r.uniform(0.0, 0.5), 0.0, 0.0, -2.0, 2.0);
  const std::vector<double> x = random_point(b.inst(), r);
  const int rows = r.integer(1, 3);
  for (int k = 0; k < rows; ++k) {
    std::vector<Term> terms;
    for (int j = 0; j < b.inst().n(); ++j) {
      if (r.bernoulli(0.6)) terms.push_back({j, quantize(r.uniform(-2.0, 3.0), 0.25)});
    }
    b.row("r" + std::to_string(k), terms, Sense::Le, quantize(activity(terms, x) + r.uniform(0.0, 2.0), 0.25));
  }
  return b.finish();
}

Instance mixed_qp(Builder& b, int size) {
  Rng& r = b.rng();
  b.split(size, r.uniform(0.2, 0.8), [&] { return b.add_var("x", -1, r.integer(1, 2), true); },
          [&] { return b.add_var("y", -1, r.integer(1, 2), false); });
  const int n = b.inst().n();
  const double density = r.uniform(0.2, 0.6);
  for (int i = 0; i < n; ++i) {
    b.product(i, i, quantize(r.uniform(-2.0, 2.0), 0.5));
    b.linear(i, quantize(r.uniform(-3.0, 3.0), 0.5));
    for (int j = i + 1; j < n; ++j) {
      if (r.bernoulli(density)) b.product(i, j, quantize(r.uniform(-3.0, 3.0), 0.5));
    }
  }
  b.ensure_nonconvex();
  const std::vector<double> x = random_point(b.inst(), r);
  if (r.bernoulli(0.6)) {
    std::vector<Term> terms;
    for (int j = 0; j < n; ++j) {
      if (r.bernoulli(0.7)) terms.push_back({j, static_cast<double>(r.integer(1, 2))});
    }
    b.row("eq", terms, Sense::Eq, activity(terms, x));
  }
  if (r.bernoulli(0.5)) {
    ExprDag& d = b.inst().dag;
    std::vector<NodeId> sq;
    double at_x = 0.0;
    for (int j = 0; j < n; ++j) {
      sq.push_back(d.add_square(d.add_var(j)));
      at_x += x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    }
    b.nonlinear_constraint(d.add_sum(sq), std::ceil(at_x) + r.integer(0, 2) + 0.5);
  }
  return b.finish();
}

Instance boxqp_int(Builder& b, int size) {
  Rng& r = b.rng();
  b.split(size, r.uniform(0.2, 0.8), [&] { return b.add_var("x", 0, r.integer(1, 3), true); },
          [&] { return b.add_var("y", 0, 1, false); });
  const int n = b.inst().n();
  const double density = r.uniform(0.3, 0.9);
  for (int i = 0; i < n; ++i) {
    b.product(i, i, quantize(r.uniform(-1.5, 1.0), 0.5));
    b.linear(i, quantize(r.uniform(-3.0, 3.0), 0.5));
    for (int j = i + 1; j < n; ++j) {
      if (r.bernoulli(density)) b.product(i, j, quantize(r.uniform(-2.0, 2.0), 0.5));
    }
  }
  b.ensure_nonconvex();
  return b.finish();
}

}  // namespace

Instance gen_synthetic(Family family, int size, std::uint64_t seed) {
  if (size < kMinSyntheticSize || size > kMaxSyntheticSize) {
    throw ValidationError("synthetic size must lie in [2, 30], got " + std::to_string(size));
  }
  Rng rng(mix_seed(mix_seed(static_cast<std::uint64_t>(family) + 1, static_cast<std::uint64_t>(size)), seed));
  std::string name = family_name(family);
  std::transform(name.begin(), name.end(), name.begin(), [](char c) { return static_cast<char>(std::tolower(c)); });
  Builder b(name + "-n" + std::to_string(size) + "-s" + std::to_string(seed), rng);
  switch (family) {
    case Family::BilinearKnapsack: return bilinear_knapsack(b, size);
    case Family::ConcaveMin: return concave_min(b, size);
    case Family::MixedQp: return mixed_qp(b, size);
    case Family::BoxqpInt: return boxqp_int(b, size);
  }
  throw ValidationError("unknown family");
}

std::vector<CorpusEntry> make_corpus(const CorpusOptions& options) {
  if (options.families.empty()) throw ValidationError("corpus needs at least one family");
  if (options.min_size > options.max_size) throw ValidationError("corpus size range is empty");
  Rng rng(options.seed);
  std::vector<CorpusEntry> out;
  for (int k = 0; k < options.count; ++k) {
    const Family f = options.families[static_cast<std::size_t>(k) % options.families.size()];
    const int size = rng.integer(options.min_size, options.max_size);
    const std::uint64_t seed = rng.next() % 1000000000ULL;
    Instance inst = gen_synthetic(f, size, seed);
    out.push_back({inst.name, std::move(inst)});
  }
  return out;
}

LabelResult compute_label(long work_mixed, long work_preferint, SolveStatus status_mixed, SolveStatus status_preferint,
                          long work_limit) {
  const bool lim_m = status_mixed == SolveStatus::WorkLimit;
  const bool lim_p = status_preferint == SolveStatus::WorkLimit;
  LabelResult r;
  if (lim_m && lim_p) {
    r.filtered = true;
    return r;
  }
  if (lim_m) work_mixed = work_limit;
  if (lim_p) work_preferint = work_limit;
  r.censored = lim_m || lim_p;
  r.label = std::log10((static_cast<double>(work_mixed) + 10.0) / (static_cast<double>(work_preferint) + 10.0));
  return r;
}

DataPoint make_data_point(const CorpusEntry& entry, int permutation_seed, long work_limit) {
  DataPoint p;
  p.instance_id = entry.id;
  p.permutation_seed = permutation_seed;
  try {
    const auto [inst, summary] = presolve(permute(entry.instance, static_cast<std::uint64_t>(permutation_seed)));
    const SolveStats mixed = solve(inst, BranchRule::Mixed, work_limit);
    p.features = extract_features(inst, summary, mixed.root, mixed.sb);
    const SolveStats pint = solve(inst, BranchRule::PreferInt, work_limit);
    p.work_mixed = mixed.work;
    p.work_preferint = pint.work;
    p.status_mixed = mixed.status;
    p.status_preferint = pint.status;
    p.nodes_mixed = mixed.nodes;
    p.nodes_preferint = pint.nodes;
    const LabelResult l = compute_label(p.work_mixed, p.work_preferint, p.status_mixed, p.status_preferint, work_limit);
    p.filtered = l.filtered;
    p.censored = l.censored;
    if (l.censored) {
      p.work_mixed = std::min(p.work_mixed, work_limit);
      p.work_preferint = std::min(p.work_preferint, work_limit);
    }
    p.label = l.label.value_or(0.0);
  } catch (const Error& e) {
    p.error = e.what();
  }
  return p;
}

void sort_rows(std::vector<DataPoint>& rows) {
  std::sort(rows.begin(), rows.end(), [](const DataPoint& a, const DataPoint& b) {
    return a.instance_id != b.instance_id ? a.instance_id < b.instance_id : a.permutation_seed < b.permutation_seed;
  });
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].instance_id == rows[k - 1].instance_id && rows[k].permutation_seed == rows[k - 1].permutation_seed) {
      throw ValidationError("duplicate row " + rows[k].instance_id + " seed " + std::to_string(rows[k].permutation_seed));
    }
  }
}

Dataset generate_dataset(std::span<const CorpusEntry> instances, const DatasetOptions& options) {
  if (options.permutations < 1) throw ValidationError("permutations must be at least 1");
  if (options.work_limit < 1) throw ValidationError("work limit must be positive");
  const std::size_t perms = static_cast<std::size_t>(options.permutations);
  const std::size_t total = instances.size() * perms;
  Dataset ds;
  ds.rows.resize(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      ds.rows[k] = make_data_point(instances[k / perms], static_cast<int>(k % perms), options.work_limit);
    }
  };
  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  sort_rows(ds.rows);
  return ds;
}

Dataset filter_dataset(const Dataset& dataset, FilterReport* report) {
  std::vector<DataPoint> rows = dataset.rows;
  sort_rows(rows);
  FilterReport rep;
  rep.dropped = {{"ROOT_SOLVED", 0}, {"FILTERED", 0}, {"FEATURE_ERROR", 0}};
  Dataset out;
  out.provenance = dataset.provenance;
  for (auto& r : rows) {
    if (!r.error.empty()) {
      ++rep.dropped["FEATURE_ERROR"];
    } else if (r.nodes_mixed == 1 || r.nodes_preferint == 1) {
      ++rep.dropped["ROOT_SOLVED"];
    } else if (r.filtered) {
      ++rep.dropped["FILTERED"];
    } else {
      out.rows.push_back(std::move(r));
    }
  }
  rep.kept = static_cast<int>(out.rows.size());
  if (report) *report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

SolveStatus parse_status(const std::string& s, int line) {
  for (SolveStatus st : {SolveStatus::Optimal, SolveStatus::Infeasible, SolveStatus::WorkLimit, SolveStatus::Unbounded}) {
    if (s == solve_status_name(st)) return st;
  }
  throw ParseError(line, "unknown status " + s);
}

double parse_number(const std::string& s, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "bad number " + s);
  }
  if (used != s.size()) throw ParseError(line, "bad number " + s);
  return v;
}

}  // namespace

std::string dataset_header() {
  std::string h(kDatasetHeaderPrefix);
  for (auto name : kFeatureNames) {
    h += name;
    h += ',';
  }
  h += "missing_mask,work_mixed,work_preferint,status_mixed,status_preferint,censored,label";
  return h;
}

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  for (const auto& line : dataset.provenance) out << '#' << (line.empty() ? "" : " ") << line << '\n';
  out << dataset_header() << '\n';
  std::vector<DataPoint> rows = dataset.rows;
  sort_rows(rows);
  for (const auto& r : rows) {
    out << r.instance_id << ',' << r.permutation_seed << ',';
    for (std::size_t i = 0; i < kNumFeatures; ++i) out << (r.features.missing[i] ? "" : fmt(r.features.values[i])) << ',';
    out << r.features.missing_mask() << ',' << r.work_mixed << ',' << r.work_preferint << ','
        << solve_status_name(r.status_mixed) << ',' << solve_status_name(r.status_preferint) << ','
        << (r.censored ? 1 : 0) << ',' << fmt(r.label) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  int lineno = 0;
  bool header = false;
  const std::size_t columns = 2 + kNumFeatures + 7;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string text = line.substr(1);
      if (!text.empty() && text[0] == ' ') text.erase(0, 1);
      ds.provenance.push_back(text);
      continue;
    }
    if (!header) {
      if (line != dataset_header()) throw ParseError(lineno, "unexpected dataset header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != columns) throw ParseError(lineno, "expected " + std::to_string(columns) + " fields");
    DataPoint p;
    p.instance_id = f[0];
    p.permutation_seed = static_cast<int>(parse_number(f[1], lineno));
    const std::string& mask = f[2 + kNumFeatures];
    if (mask.size() != kNumFeatures || mask.find_first_not_of("01") != std::string::npos) {
      throw ParseError(lineno, "bad missing mask " + mask);
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      p.features.missing[i] = mask[i] == '1';
      if (p.features.missing[i]) {
        if (!f[2 + i].empty()) throw ParseError(lineno, "value given for a missing feature");
      } else {
        p.features.values[i] = parse_number(f[2 + i], lineno);
      }
    }
    std::size_t c = 3 + kNumFeatures;
    p.work_mixed = static_cast<long>(parse_number(f[c++], lineno));
    p.work_preferint = static_cast<long>(parse_number(f[c++], lineno));
    p.status_mixed = parse_status(f[c++], lineno);
    p.status_preferint = parse_status(f[c++], lineno);
    p.censored = parse_number(f[c++], lineno) != 0.0;
    p.label = parse_number(f[c++], lineno);
    ds.rows.push_back(std::move(p));
  }
  if (!header) throw ParseError(lineno, "missing dataset header");
  return ds;
}

}  // namespace branchsel
