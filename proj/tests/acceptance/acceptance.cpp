// Acceptance runner: `acceptance [N]` checks criterion N (all when omitted) and
// prints one PASS/FAIL line per criterion.

#include "perflab/experiments.hpp"
#include "perflab/identify.hpp"
#include "perflab/interference.hpp"
#include "perflab/linalg.hpp"
#include "perflab/predictors.hpp"
#include "perflab/scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace perflab;

namespace {

// Tolerances.
constexpr double kProp1Relative = 0.10;
constexpr double kFig3aFactor = 1.5;
constexpr double kFig3Relative = 0.03;
constexpr double kCoefAbs = 0.02;
constexpr double kExact = 1e-8;
constexpr double kFig4bFactor = 1.5;
constexpr double kFig4bRelative = 0.05;
constexpr double kFig4aRatio = 0.5;
constexpr double kPooled = 2.0;
constexpr double kRddSe = 3.0;
constexpr double kInterferenceRelative = 0.05;
constexpr double kAccuracyDrop = 0.05;
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed] ";
    }
    detail << what << "; ";
  }
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(5);
  s << v;
  return s.str();
}

RunOptions parallel() {
  RunOptions o;
  o.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return o;
}

ExperimentResult run(const std::string& name, const std::function<void(ExperimentSpec&)>& tweak = {}) {
  ExperimentSpec s = default_spec(name);
  s.seed = kSeed;
  if (tweak) tweak(s);
  return run_experiment(s, parallel());
}

double pooled(const ResultRow& a, const ResultRow& b) { return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error); }

// Per-replicate difference a - b, summarised as mean and standard error.
ResultRow difference(const ResultRow& a, const ResultRow& b) {
  ResultRow d;
  for (std::size_t r = 0; r < a.values.size(); ++r) d.values.push_back(a.values[r] - b.values[r]);
  double m = 0.0;
  for (double v : d.values) m += v;
  d.mean = m / static_cast<double>(d.values.size());
  d.std_error = standard_error(d.values);
  return d;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

void criterion_1(Outcome& o) {
  const ExperimentResult r = run("fig3b-random", [](ExperimentSpec& s) { s.sweep_values = {0.25, 0.5, 1.0}; });
  for (double a : r.spec.sweep_values) {
    const double measured = r.diagnostic(a, "excess-without").mean;
    const double predicted = r.diagnostic(a, "prop1").mean;
    const double rel = std::abs(measured / predicted - 1.0);
    o.require(rel <= kProp1Relative, "alpha " + num(a) + ": excess " + num(measured) + " vs alpha^2 d^2 " + num(predicted) +
                                         " (rel " + num(rel) + ")");
  }
}

void criterion_2(Outcome& o) {
  {
    const ExperimentResult r = run("fig3a-noniden");
    const auto& alphas = r.spec.sweep_values;
    const double with1 = r.row(1.0, "with-yhat").mean, base1 = r.row(1.0, "baseline").mean;
    o.require(with1 >= kFig3aFactor * base1, "3a alpha 1: with " + num(with1) + " vs baseline " + num(base1));
    double worst = 0.0;
    for (std::size_t i = 0; i < alphas.size(); ++i)
      for (std::size_t j = i + 1; j < alphas.size(); ++j) {
        const ResultRow ei = difference(r.row(alphas[i], "with-yhat"), r.row(alphas[i], "baseline"));
        const ResultRow ej = difference(r.row(alphas[j], "with-yhat"), r.row(alphas[j], "baseline"));
        worst = std::max(worst, std::abs(ei.mean - ej.mean) / pooled(ei, ej));
      }
    o.require(worst <= kPooled, "3a excess spread " + num(worst) + " pooled SE");
  }
  for (const char* name : {"fig3b-random", "fig3c-overparam", "fig3d-discrete"}) {
    const ExperimentResult r = run(name);
    double worst = 0.0;
    for (double a : r.spec.sweep_values)
      worst = std::max(worst, std::abs(r.row(a, "with-yhat").mean / r.row(a, "baseline").mean - 1.0));
    o.require(worst <= kFig3Relative, std::string(name) + " max rel gap " + num(worst));
  }
}

void criterion_3(Outcome& o) {
  for (const char* name : {"fig3b-random", "fig3c-overparam", "fig3d-discrete"}) {
    const ExperimentResult r = run(name, [](ExperimentSpec& s) { s.sweep_values = {0.5}; });
    const auto& coef = r.diagnostic(0.5, "yhat-coef").values;
    const auto& xerr = r.diagnostic(0.5, "x-coef-max-error").values;
    double c_worst = 0.0, x_worst = 0.0;
    for (double c : coef) c_worst = std::max(c_worst, std::abs(c - 0.5));
    for (double e : xerr) x_worst = std::max(x_worst, e);
    o.require(c_worst <= kCoefAbs && x_worst <= kCoefAbs,
              std::string(name) + " yhat err " + num(c_worst) + ", x err " + num(x_worst));
  }
}

Dataset example_data(double gamma) {
  const auto src = CovariateSource::standard_normal(1);
  const Predictor f = make_polynomial_predictor(1, 2, vec({2.0, gamma}), 0.0);
  return generate_dataset(src, f, OutcomeMechanism::linear(vec({1.0}), 0.0, 0.5), 1000, SeedPlan(kSeed));
}

void criterion_4(Outcome& o) {
  for (double gamma : {1.0, 0.0}) {
    const Dataset d = example_data(gamma);
    Matrix a(d.rows(), 2);
    a << d.x, d.yhat;
    const LeastSquaresSolution s = ols_minimum_norm(a, d.y);
    if (gamma > 0) {
      const double err = std::max(std::abs(s.weights[0] - 1.0), std::abs(s.weights[1] - 0.5));
      o.require(!s.rank_deficient && err <= kExact, "gamma 1: weights error " + num(err));
    } else {
      o.require(s.rank_deficient, std::string("gamma 0: rank deficient = ") + (s.rank_deficient ? "yes" : "no"));
    }
  }
}

void criterion_5(Outcome& o) {
  const ExperimentResult r = run("fig4b-noise-sweep");
  const double w0 = r.row(0.0, "with-yhat").mean, b0 = r.row(0.0, "baseline").mean;
  o.require(w0 >= kFig4bFactor * b0, "beta 0: with " + num(w0) + " vs baseline " + num(b0));
  double worst = 0.0;
  for (double b : r.spec.sweep_values)
    if (b >= 0.05) worst = std::max(worst, std::abs(r.row(b, "with-yhat").mean / r.row(b, "baseline").mean - 1.0));
  o.require(worst <= kFig4bRelative, "beta >= 0.05 max rel gap " + num(worst));
}

void criterion_6(Outcome& o) {
  const ExperimentResult r = run("fig4a-width-sweep");
  const double w2 = r.row(2, "with-yhat").mean, w16 = r.row(16, "with-yhat").mean;
  o.require(w16 <= kFig4aRatio * w2, "with m=16 " + num(w16) + " vs m=2 " + num(w2));
  const ResultRow* lo = nullptr;
  const ResultRow* hi = nullptr;
  for (double m : r.spec.sweep_values) {
    const ResultRow& row = r.row(m, "without-yhat");
    if (!lo || row.mean < lo->mean) lo = &row;
    if (!hi || row.mean > hi->mean) hi = &row;
  }
  const double spread = (hi->mean - lo->mean) / pooled(*hi, *lo);
  o.require(spread <= kPooled, "without spread " + num(spread) + " pooled SE");
}

Dataset rdd_data(double sigma, Index n) {
  const Vector beta = vec({1.0, -0.5, 0.25, 2.0, 0.0});
  const auto src = CovariateSource::standard_normal(beta.size());
  const Predictor f = wrap_discretize(make_linear_predictor(Vector::Ones(beta.size()), 0.0), {-1.5, -0.5, 0.5, 1.5});
  const auto m = OutcomeMechanism::linear(beta, 0.3, 0.5, sigma > 0 ? NoiseSpec::gaussian(sigma) : NoiseSpec::none());
  return generate_dataset(src, f, m, n, SeedPlan(kSeed));
}

void criterion_7(Outcome& o) {
  const RDDFit noisy = rdd_identify(rdd_data(1.0, 200000));
  double worst = 0.0;
  for (std::size_t k = 1; k < noisy.levels.size(); ++k)
    worst = std::max(worst, std::abs(noisy.offsets[k] - 0.5 * (noisy.levels[k] - noisy.levels[0])) / noisy.offset_std_errors[k]);
  o.require(noisy.levels.size() == 4 && worst <= kRddSe, "noisy offsets within " + num(worst) + " SE");
  const RDDFit exact = rdd_identify(rdd_data(0.0, 5000));
  double err = 0.0;
  for (std::size_t k = 0; k < exact.levels.size(); ++k)
    err = std::max(err, std::abs(exact.offsets[k] - 0.5 * (exact.levels[k] - exact.levels[0])));
  o.require(err <= kExact, "noiseless offset error " + num(err));
}

void criterion_8(Outcome& o) {
  for (const char* name : {"fig5a-trainsize-sweep", "fig5b-trainsize-sweep"}) {
    const ExperimentResult r = run(name);
    const auto& n = r.spec.sweep_values;
    bool monotone = true;
    for (std::size_t k = 1; k < n.size(); ++k) {
      const ResultRow& prev = r.row(n[k - 1], "with-yhat");
      const ResultRow& cur = r.row(n[k], "with-yhat");
      monotone = monotone && cur.mean <= prev.mean + kPooled * pooled(prev, cur);
    }
    const double gap_first = r.row(n.front(), "with-yhat").mean - r.row(n.front(), "baseline").mean;
    const double gap_last = r.row(n.back(), "with-yhat").mean - r.row(n.back(), "baseline").mean;
    o.require(monotone && gap_last < gap_first,
              std::string(name) + (monotone ? " monotone" : " not monotone") + ", gap " + num(gap_first) + " -> " + num(gap_last));
  }
  // Test-sample noise dominates each RMSE, so the variance comparison needs many replicates.
  const ExperimentResult r = run("fig5c-shift-sweep", [](ExperimentSpec& s) { s.replicates = 200; });
  auto variance = [](const std::vector<double>& v) {
    const double se = standard_error(v);
    return se * se * static_cast<double>(v.size());
  };
  const double v0 = variance(r.row(0.0, "with-yhat").values), v1 = variance(r.row(1.0, "with-yhat").values);
  o.require(v0 >= v1, "fig5c variance rho 0 " + num(v0) + " vs rho 1 " + num(v1));
}

LinearInMeansConfig lim(double sigma) {
  LinearInMeansConfig c;
  c.g1 = LinearBase{vec({1.0, 0.5}), 0.0};
  c.alpha = 1.0;
  c.beta_spill = 0.5;
  c.noise = sigma > 0 ? NoiseSpec::gaussian(sigma) : NoiseSpec::none();
  return c;
}

Matrix gaussian(Index n, Index d) {
  Rng rng(kSeed);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

void criterion_9(Outcome& o) {
  Vector w = Vector::Zero(5);
  w[0] = 1.0;
  w[2] = 0.5;
  const Predictor f = make_polynomial_predictor(2, 2, w, 0.0);
  for (double sigma : {0.0, 1.0}) {
    const Index n = sigma > 0 ? 100000 : 2000;
    const NetworkSample s = build_homophilous_network(gaussian(n / 2, 2), {NetworkMethod::clone_groups, 10, 2});
    const InterferenceComparison c = fit_and_compare_interference(simulate_linear_in_means(s.network, s.x, f, lim(sigma), SeedPlan(kSeed)));
    if (sigma > 0)
      o.require(std::abs(c.coef_yhat_without_g / 1.5 - 1.0) <= kInterferenceRelative, "sigma 1: coef " + num(c.coef_yhat_without_g));
    else
      o.require(std::abs(c.coef_yhat_without_g - 1.5) <= kExact, "noiseless: coef error " + num(std::abs(c.coef_yhat_without_g - 1.5)));
  }
  const Network star = star_network(4);
  const Matrix x = Matrix::Zero(5, 2);
  bool differs = true;
  for (Index node = 0; node < 5; ++node) {
    const SpilloverContrast sc = unilateral_vs_population(star, x, Vector::Zero(5), Vector::Ones(5), lim(0.0), node);
    differs = differs && std::abs(sc.population_effect - sc.unilateral_effect) > kExact;
  }
  o.require(differs, std::string("star: unilateral != population at every node = ") + (differs ? "yes" : "no"));
}

void criterion_10(Outcome& o) {
  const Index d = 5;
  const auto src = CovariateSource::standard_normal(d);
  Rng rng(kSeed);
  const Predictor lin = make_linear_predictor(vec({1.0, -0.5, 0.25, 0.0, 2.0}), 0.1);
  const Predictor laplace = wrap_noise(lin, NoiseSpec::laplace(1.0, NoiseTarget::prediction));
  int laplace_pass = 0, det_fail = 0;
  const int targets = 5;
  for (int t = 0; t < targets; ++t) {
    Vector wt(d);
    for (Index j = 0; j < d; ++j) wt[j] = 2.0 * rng.normal();
    const Predictor target = make_linear_predictor(wt, rng.normal());
    laplace_pass += check_output_overlap(laplace, target, src, 2000).passed;
    det_fail += !check_output_overlap(lin, target, src, 2000).passed;
  }
  o.require(laplace_pass == targets, "laplace passes " + std::to_string(laplace_pass) + "/" + std::to_string(targets));
  o.require(det_fail == targets, "deterministic fails " + std::to_string(det_fail) + "/" + std::to_string(targets));
  Vector q = Vector::Zero(static_cast<Index>(polynomial_terms(d, 2).size()));
  q.head(d) = vec({1.0, -0.5, 0.25, 0.0, 2.0});
  q[d] = 0.5;
  const OverparamReport quad = check_overparameterized(make_polynomial_predictor(d, 2, q, 0.0), linear_basis(d), src, 2000);
  const OverparamReport flat = check_overparameterized(lin, linear_basis(d), src, 2000);
  o.require(quad.passed && !flat.passed,
            "overparam ratio degree 2 " + num(quad.residual_ratio) + ", linear " + num(flat.residual_ratio));
}

void criterion_11(Outcome& o) {
  const ExperimentResult rp = run("appD-misspec");
  double worst = 0.0;
  for (double p : rp.spec.sweep_values)
    if (p >= 0.2) {
      const ResultRow& w = rp.row(p, "with-yhat");
      const ResultRow& wo = rp.row(p, "without-yhat");
      worst = std::max(worst, (wo.mean - w.mean) / pooled(w, wo));
    }
  o.require(worst <= kPooled, "p-sweep worst shortfall " + num(worst) + " pooled SE");
  const ExperimentResult rg = run("appD-misspec", [](ExperimentSpec& s) {
    s.sweep_parameter = "gamma";
    s.sweep_values = {0.05, 0.15, 0.25, 0.35, 0.45, 0.5};
  });
  const double a = rg.row(0.05, "with-yhat").mean, b = rg.row(0.5, "with-yhat").mean;
  o.require(a - b >= kAccuracyDrop, "gamma-sweep accuracy " + num(a) + " -> " + num(b));
}

void criterion_12(Outcome& o) {
  const std::vector<std::pair<std::string, std::function<void(ExperimentSpec&)>>> cases = {
      {"fig3b-random", [](ExperimentSpec& s) { s.n_train = s.n_test = 5000; s.replicates = 3; }},
      {"fig3d-discrete", [](ExperimentSpec& s) { s.n_train = s.n_test = 5000; s.replicates = 3; }},
      {"fig4a-width-sweep", [](ExperimentSpec& s) { s.sweep_values = {1, 4}; s.n_train = 1000; s.train.epochs = 20; s.replicates = 2; }},
      {"fig5c-shift-sweep", [](ExperimentSpec& s) { s.replicates = 3; }},
      {"appD-misspec", [](ExperimentSpec& s) { s.replicates = 3; }}};
  for (const auto& [name, tweak] : cases) {
    ExperimentSpec s = default_spec(name);
    s.seed = kSeed;
    tweak(s);
    std::string first_csv, first_json;
    bool same = true;
    for (int jobs : {1, 4, 1, 3}) {
      RunOptions opt;
      opt.jobs = jobs;
      const ExperimentResult r = run_experiment(s, opt);
      const std::string csv = result_csv(r), js = result_json(r).dump(2);
      if (first_csv.empty()) {
        first_csv = csv;
        first_json = js;
      }
      same = same && csv == first_csv && js == first_json;
    }
    o.require(same, name + (same ? " identical" : " differs") + " across jobs 1/4/1/3");
  }
}

const std::vector<std::function<void(Outcome&)>> kCriteria = {criterion_1, criterion_2, criterion_3, criterion_4,
                                                               criterion_5, criterion_6, criterion_7, criterion_8,
                                                               criterion_9, criterion_10, criterion_11, criterion_12};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > static_cast<int>(kCriteria.size())) {
      std::cerr << "usage: acceptance [1-" << kCriteria.size() << "]\n";
      return 2;
    }
    which.push_back(n);
  } else {
    for (int n = 1; n <= static_cast<int>(kCriteria.size()); ++n) which.push_back(n);
  }
  bool all = true;
  for (int n : which) {
    Outcome o;
    try {
      kCriteria[static_cast<std::size_t>(n - 1)](o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail.str() << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
