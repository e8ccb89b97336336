#include "perflab/covariates.hpp"
#include "perflab/csv.hpp"
#include "perflab/noise.hpp"
#include "perflab/predictors.hpp"
#include "perflab/rng.hpp"
#include "perflab/scm.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <unordered_set>

using namespace perflab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double sample_variance(const Vector& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("perflab_scm_" + name)).string();
}

}  // namespace

TEST_CASE("seed plan streams are pure and distinct") {
  const SeedPlan plan(42);
  CHECK(plan.stream("x", 3) == SeedPlan(42).stream("x", 3));
  std::unordered_set<std::uint64_t> seen;
  const char* labels[] = {"x", "yhat", "y", "train/x", "test/x", "meta/with", "meta/without", "shuffle", "g1", "f_theta"};
  for (const char* label : labels)
    for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(plan.stream(label, r));
  CHECK(seen.size() == 10000);
  CHECK(plan.child("a", 1).master() == plan.stream("a", 1));
  CHECK(SeedPlan(1).stream("x") != SeedPlan(2).stream("x"));
}

TEST_CASE("rng with the same seed repeats its sequence") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
  }
  Rng c(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = c.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(c.below(5) < 5);
  }
}

TEST_CASE("covariate sources") {
  SUBCASE("gaussian draws have the source dimension") {
    const auto src = CovariateSource::standard_normal(4);
    Rng rng(1);
    const auto s = src.sample(100, rng);
    CHECK(s.x.rows() == 100);
    CHECK(s.x.cols() == 4);
    CHECK(s.rows.empty());
    Rng again(1);
    CHECK(src.sample(100, again).x == s.x);
  }
  SUBCASE("table mode resamples rows uniformly with replacement") {
    CovariateTable t;
    t.columns = {"a", "b"};
    t.values.resize(4, 2);
    t.values << 0, 1, 2, 3, 4, 5, 6, 7;
    const auto src = CovariateSource::from_table(t);
    Rng rng(3);
    const Index n = 100000;
    const auto s = src.sample(n, rng);
    REQUIRE(s.rows.size() == static_cast<std::size_t>(n));
    std::vector<double> freq(4, 0.0);
    for (Index i = 0; i < n; ++i) {
      const Index r = s.rows[static_cast<std::size_t>(i)];
      REQUIRE(s.x.row(i) == t.values.row(r));
      freq[static_cast<std::size_t>(r)] += 1.0 / static_cast<double>(n);
    }
    for (double f : freq) CHECK(std::abs(f - 0.25) < 0.01);
  }
}

TEST_CASE("noise families") {
  Rng rng(5);
  const auto zero = NoiseSpec::gaussian(0.0);
  CHECK(zero.is_degenerate());
  for (int i = 0; i < 100; ++i) CHECK(zero.sample(rng) == 0.0);
  CHECK(NoiseSpec::none().sample(rng) == 0.0);

  const double sigma = 2.0;
  const auto g = NoiseSpec::gaussian(sigma);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += g.sample(rng);
  CHECK(std::abs(sum / n) < 5.0 * sigma / 1000.0);

  CHECK(NoiseSpec::laplace(1.0).has_full_support());
  CHECK_FALSE(NoiseSpec::uniform(1.0).has_full_support());
  CHECK(NoiseSpec::laplace(2.0).variance() == doctest::Approx(8.0));
  CHECK(NoiseSpec::uniform(3.0).variance() == doctest::Approx(3.0));
}

TEST_CASE("outcome mechanism examples") {
  SUBCASE("linear mode value") {
    const auto m = OutcomeMechanism::linear(vec({1, 1}), 0.0, 0.5);
    CHECK(ground_truth_m_y(m, vec({0, 0}), 2.0) == doctest::Approx(1.0));
  }
  SUBCASE("alpha zero ignores the prediction") {
    const auto m = OutcomeMechanism::linear(vec({1, -2}), 0.3, 0.0);
    CHECK(ground_truth_m_y(m, vec({0.4, 1.1}), -5.0) == ground_truth_m_y(m, vec({0.4, 1.1}), 7.0));
  }
  SUBCASE("probabilistic replace mode expectation matches brute-force sampling") {
    OutcomeMechanism m;
    m.base = LinearBase{vec({0.0}), 3.0};
    m.performativity = ReplacePerformativity{0.5};
    CHECK(ground_truth_m_y(m, vec({0.7}), 1.0) == doctest::Approx(2.0));
    const Index n = 200000;
    Matrix x = Matrix::Constant(n, 1, 0.7);
    Rng rng(11);
    const Vector y = m.sample(x, Vector::Ones(n), rng);
    const double se = std::sqrt(sample_variance(y) / static_cast<double>(n));
    CHECK(std::abs(y.mean() - 2.0) < 4.0 * se);
    for (Index i = 0; i < n; ++i) REQUIRE((y[i] == 1.0 || y[i] == 3.0));
  }
}

TEST_CASE("generate_dataset examples") {
  const auto src = CovariateSource::standard_normal(2);
  SUBCASE("alpha zero removes mediation") {
    const auto m = OutcomeMechanism::linear(vec({1.5, -0.5}), 0.0, 0.0);
    const auto f = wrap_noise(make_linear_predictor(vec({3, 1}), 0.0),
                              NoiseSpec::gaussian(1.0, NoiseTarget::prediction));
    const Dataset d = generate_dataset(src, f, m, 500, SeedPlan(1));
    const Vector expect = d.x * vec({1.5, -0.5});
    CHECK((d.y - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("deterministic linear predictor composes") {
    const Vector beta = vec({1.0, 2.0}), theta = vec({-0.5, 0.25});
    const double alpha = 0.7;
    const auto m = OutcomeMechanism::linear(beta, 0.0, alpha);
    const Dataset d = generate_dataset(src, make_linear_predictor(theta, 0.0), m, 500, SeedPlan(2));
    const Vector expect = d.x * (beta + alpha * theta);
    CHECK((d.y - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("moments of y match the closed form") {
    const Vector beta = vec({1, 1}), theta = vec({1, 0});
    const double alpha = 0.5;
    const auto m = OutcomeMechanism::linear(beta, 0.0, alpha, NoiseSpec::gaussian(1.0));
    const Index n = 1000000;
    const Dataset d = generate_dataset(src, make_linear_predictor(theta, 0.0), m, n, SeedPlan(3));
    const double closed_var = (beta + alpha * theta).squaredNorm() + 1.0;
    CHECK(std::abs(d.y.mean()) < 0.005);
    CHECK(std::abs(sample_variance(d.y) / closed_var - 1.0) < 0.02);

    // Independent Monte Carlo on a separate generator.
    std::mt19937_64 eng(12345);
    std::normal_distribution<double> z;
    double s = 0.0, s2 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double x0 = z(eng), x1 = z(eng);
      const double y = beta[0] * x0 + beta[1] * x1 + alpha * (theta[0] * x0 + theta[1] * x1) + z(eng);
      s += y;
      s2 += y * y;
    }
    const double mc_var = s2 / n - (s / n) * (s / n);
    CHECK(std::abs(sample_variance(d.y) / mc_var - 1.0) < 0.02);
  }
  SUBCASE("columns have equal length and regeneration is byte identical") {
    const auto m = OutcomeMechanism::linear(vec({1, 0}), 0.5, 0.3, NoiseSpec::laplace(1.0));
    const auto f = wrap_noise(make_linear_predictor(vec({1, 1}), 0.0), NoiseSpec::gaussian(0.5, NoiseTarget::prediction));
    const Dataset a = generate_dataset(src, f, m, 300, SeedPlan(9), "train");
    const Dataset b = generate_dataset(src, f, m, 300, SeedPlan(9), "train");
    CHECK(a.x.rows() == 300);
    CHECK(a.yhat.size() == 300);
    CHECK(a.y.size() == 300);
    CHECK(a.y.allFinite());
    const std::string pa = temp_path("a.csv"), pb = temp_path("b.csv");
    write_dataset(a, pa);
    write_dataset(b, pb);
    CHECK(read_text_file(pa) == read_text_file(pb));
    const Dataset back = read_dataset(pa);
    CHECK(back.x == a.x);
    CHECK(back.y == a.y);
    CHECK(back.yhat == a.yhat);
    CHECK(back.provenance.master_seed == 9);
  }
}

TEST_CASE("mediation sufficiency: equal prediction vectors give equal outcomes") {
  const auto src = CovariateSource::standard_normal(2);
  const auto m = OutcomeMechanism::linear(vec({1, -1}), 0.2, 0.8, NoiseSpec::gaussian(1.0));
  const Predictor lin = make_linear_predictor(vec({0.5, 2.0}), 0.1);
  // Degree-2 polynomial with zero quadratic weights produces the same predictions.
  Vector w = Vector::Zero(5);
  w[0] = 0.5;
  w[1] = 2.0;
  const Predictor poly = make_polynomial_predictor(2, 2, w, 0.1);
  const Dataset a = generate_dataset(src, lin, m, 1000, SeedPlan(4));
  const Dataset b = generate_dataset(src, poly, m, 1000, SeedPlan(4));
  REQUIRE((a.yhat - b.yhat).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("induced conditional mixes the mechanism over prediction levels") {
  const auto src = CovariateSource::standard_normal(1);
  const double alpha = 1.5;
  const auto m = OutcomeMechanism::linear(vec({2.0}), 0.0, alpha, NoiseSpec::gaussian(1.0));
  const Predictor f = wrap_discretize(
      wrap_noise(make_linear_predictor(vec({1.0}), 0.0), NoiseSpec::gaussian(0.5, NoiseTarget::prediction)), {0.0, 1.0});
  const Dataset d = generate_dataset(src, f, m, 400000, SeedPlan(6));
  double sy = 0.0, sy2 = 0.0, sx = 0.0, count = 0.0, ones = 0.0;
  for (Index i = 0; i < d.rows(); ++i) {
    if (d.x(i, 0) < 0.2 || d.x(i, 0) > 0.4) continue;
    count += 1.0;
    sy += d.y[i];
    sy2 += d.y[i] * d.y[i];
    sx += d.x(i, 0);
    ones += d.yhat[i];
  }
  REQUIRE(count > 1000.0);
  const double q1 = ones / count, xbar = sx / count;
  CHECK(q1 > 0.1);
  CHECK(q1 < 0.9);
  const double predicted = (1.0 - q1) * ground_truth_m_y(m, vec({xbar}), 0.0) + q1 * ground_truth_m_y(m, vec({xbar}), 1.0);
  const double mean = sy / count;
  const double se = std::sqrt((sy2 / count - mean * mean) / count);
  CHECK(std::abs(mean - predicted) < 4.0 * se);
}

TEST_CASE("prediction distance") {
  const auto src = CovariateSource::standard_normal(3);
  const Predictor a = make_linear_predictor(vec({1, 0, 2}), 0.0);
  const Predictor b = make_linear_predictor(vec({0, 1, 1}), 0.0);
  const Estimate same = prediction_distance_sq(a, a, src, 1000, 1);
  CHECK(same.value == 0.0);
  CHECK(same.std_error == 0.0);
  const Estimate consts =
      prediction_distance_sq(make_linear_predictor(Vector::Zero(3), 0.0), make_linear_predictor(Vector::Zero(3), 1.0), src, 100, 1);
  CHECK(consts.value == doctest::Approx(1.0));
  const Estimate e = prediction_distance_sq(a, b, src, 200000, 2);
  const double closed = (vec({1, 0, 2}) - vec({0, 1, 1})).squaredNorm();
  CHECK(std::abs(e.value - closed) < 3.0 * e.std_error);
}

TEST_CASE("prop1 bounds") {
  const Bounds zero_alpha = prop1_bounds(0.0, 3.0, 1.0, 2.0);
  CHECK(zero_alpha.lower == 0.0);
  CHECK(zero_alpha.upper == 0.0);
  const Bounds zero_d = prop1_bounds(0.7, 0.0, 1.0, 2.0);
  CHECK(zero_d.lower == 0.0);
  CHECK(zero_d.upper == 0.0);
  const Bounds sq = prop1_bounds(0.5, 4.0, 2.0, 2.0);
  CHECK(sq.lower == doctest::Approx(1.0));
  CHECK(sq.upper == doctest::Approx(1.0));
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double alpha = rng.uniform(0.01, 2.0), d = rng.uniform(0.01, 5.0);
    const double mu = rng.uniform(0.1, 3.0), gamma = mu + (i % 2 == 0 ? 0.0 : rng.uniform(0.01, 3.0));
    const Bounds b = prop1_bounds(alpha, d, mu, gamma);
    REQUIRE(b.lower <= b.upper);
    REQUIRE((b.lower == b.upper) == (mu == gamma));
  }
}

TEST_CASE("counterfactual metric") {
  const auto src = CovariateSource::standard_normal(2);
  const Predictor f = make_linear_predictor(vec({1, -1}), 2.0);
  SUBCASE("constant kappa") {
    const auto m = OutcomeMechanism::linear(vec({1, 1}), 0.0, 0.5, NoiseSpec::gaussian(1.0));
    const Estimate e = counterfactual_metric(m, [](const Vector&, double, double) { return 1.0; }, src, f, 1000, 1);
    CHECK(e.value == doctest::Approx(1.0));
  }
  SUBCASE("kappa = y gives alpha times the mean prediction") {
    const double alpha = 0.5;
    const auto m = OutcomeMechanism::linear(vec({1, 1}), 0.0, alpha, NoiseSpec::gaussian(1.0));
    const Estimate e = counterfactual_metric(m, [](const Vector&, double y, double) { return y; }, src, f, 200000, 2);
    CHECK(std::abs(e.value - alpha * 2.0) < 3.0 * e.std_error);
  }
  SUBCASE("squared deviation is zero when y equals the prediction") {
    const auto m = OutcomeMechanism::linear(vec({0, 0}), 0.0, 1.0);
    const Estimate e = counterfactual_metric(
        m, [](const Vector&, double y, double yhat) { return (y - yhat) * (y - yhat); }, src, f, 1000, 3);
    CHECK(e.value == doctest::Approx(0.0));
  }
}

TEST_CASE("dataset validation rejects non-finite values") {
  Dataset d;
  d.x = Matrix::Zero(3, 1);
  d.yhat = Vector::Zero(3);
  d.y = Vector::Zero(3);
  CHECK_NOTHROW(d.validate());
  d.y[1] = std::nan("");
  CHECK_THROWS_AS(d.validate(), NonFiniteError);
  d.y = Vector::Zero(2);
  CHECK_THROWS_AS(d.validate(), DimensionError);
}

TEST_CASE("mechanism JSON round trip") {
  const auto m = OutcomeMechanism::linear(vec({1, 2}), 0.5, 0.25, NoiseSpec::laplace(0.5));
  nlohmann::json j = m;
  const OutcomeMechanism back = j.get<OutcomeMechanism>();
  CHECK(ground_truth_m_y(back, vec({0.3, -1}), 2.0) == ground_truth_m_y(m, vec({0.3, -1}), 2.0));
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("jackknife mean") {
  Vector v(4);
  v << 1, 2, 3, 4;
  const Estimate e = jackknife_mean(v);
  CHECK(e.value == doctest::Approx(2.5));
  CHECK(e.std_error == doctest::Approx(std::sqrt((1.25 * 4.0 / 3.0) / 4.0)));
}
