#include "fedsim/estimator.hpp"

#include <doctest.h>

#include <cmath>

using namespace fedsim;

TEST_CASE("entropy estimate of a single-class bias update") {
  Vector db = Vector::Zero(10);
  db(0) = 0.01;
  const Vector s = softmax(db, 0.0025);
  CHECK(s(0) == doctest::Approx(0.858).epsilon(1e-3));
  CHECK(s(1) == doctest::Approx(0.0157).epsilon(1e-2));
  CHECK(estimate_entropy(db, {}) == doctest::Approx(0.718639).epsilon(1e-5));
  CHECK(estimate_entropy(Vector::Zero(10), {}) == doctest::Approx(std::log(10.0)));
}

TEST_CASE("estimator input validation") {
  CHECK_THROWS_AS(estimate_entropy(Vector::Zero(3), {0.0}), ConfigError);
  Vector bad = Vector::Zero(3);
  bad(1) = std::nan("");
  CHECK_THROWS_AS(estimate_entropy(bad, {}), DomainError);
  // Huge logits stay finite thanks to max-subtraction.
  Vector big = Vector::Zero(3);
  big(0) = 1e6;
  CHECK(estimate_entropy(big, {}) == doctest::Approx(0.0));
}

TEST_CASE("confusion averages of a constant model") {
  const MlpModel m = MlpModel::zeros({2, 4});
  const ClientDataset ds = ClientDataset::from(FeatureMatrix::Random(8, 2), {0, 1, 2, 3, 0, 1, 2, 3}, 4);
  const ConfusionAverages conf = confusion_averages(m, ds);
  CHECK(conf.e.isApprox(Vector::Constant(4, 0.25)));
  CHECK(conf.delta == doctest::Approx(0.0));

  const ClientDataset single = ClientDataset::from(FeatureMatrix::Random(3, 2), {1, 1, 1}, 4);
  CHECK_THROWS_AS(confusion_averages(m, single), DomainError);
}

TEST_CASE("expected bias update") {
  ConfusionAverages conf;
  conf.e = Vector::Constant(2, 0.5);
  Vector p(2);
  p << 0.75, 0.25;
  const Vector u = expected_bias_update(LabelDistribution::from_probs(p), conf, 0.1, 1);
  CHECK(u(0) == doctest::Approx(0.025));
  CHECK(u(1) == doctest::Approx(-0.025));
  // A balanced client with uniform confusion has zero expected update.
  CHECK(expected_bias_update(LabelDistribution::uniform(2), conf, 0.1, 3).norm() < 1e-15);
}

TEST_CASE("entropy-gap bound for uniform vs one-hot") {
  ConfusionAverages conf;
  conf.e = Vector::Constant(10, 0.1);
  conf.delta = 0;
  const double rhs =
      theorem1_rhs(LabelDistribution::uniform(10), LabelDistribution::one_hot(10, 0), conf, 0.1, 1, 0.0025);
  CHECK(rhs == doctest::Approx(7.2));
  conf.delta = 0.01;
  CHECK(theorem1_rhs(LabelDistribution::uniform(10), LabelDistribution::one_hot(10, 0), conf, 0.1, 1, 0.0025) < rhs);
}

TEST_CASE("envelope curve and coverage") {
  const EnvelopeParams p{1.0, 0.13, 0.14};
  CHECK(p.curve(std::log(10.0), 10) == doctest::Approx(0.01));
  CHECK(p.curve(0.0, 10) == doctest::Approx(0.14 - 0.013));
  CHECK_THROWS_AS((EnvelopeParams{1.0, 0.2, 0.1}.validate()), ConfigError);

  std::vector<ScatterPoint> pts = {{0.0, 0.1, 0, 0}, {std::log(10.0), 0.005, 0, 1}, {std::log(10.0), 0.5, 0, 2}};
  CHECK(envelope_coverage(pts, p, 10) == doctest::Approx(2.0 / 3.0));

  const EnvelopeFit fit = fit_envelope(pts, 10, 0.6);
  REQUIRE(fit.feasible);
  CHECK(fit.coverage >= 0.6);
  CHECK(fit.params.kappa > fit.params.rho);
  CHECK(fit.params.rho > 0);
}

TEST_CASE("assumption scatter") {
  Rng rng(3);
  const MlpModel m = MlpModel::random({2, 3}, rng);
  const ClientDataset a = ClientDataset::from(FeatureMatrix::Random(4, 2), {0, 0, 0, 0}, 3);
  const ClientDataset b = ClientDataset::from(FeatureMatrix::Random(3, 2), {0, 1, 2}, 3);
  const std::vector<std::size_t> rows_a = {0, 1, 2, 3};
  FeatureMatrix x(7, 2);
  x << a.features, b.features;
  const ClientDataset pooled = ClientDataset::from(x, {0, 0, 0, 0, 0, 1, 2}, 3);
  const auto pts = assumption_scatter({a, b}, pooled, m, 0.1, 4);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].entropy == 0.0);
  CHECK(pts[1].entropy == doctest::Approx(std::log(3.0)));
  CHECK(pts[0].gap > 0);
  CHECK(pts[2].gap == 0.0);
  CHECK(!pts[2].client);
  CHECK(pts[1].round == 4);
}
