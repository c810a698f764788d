#include <doctest.h>

#include <cmath>
#include <vector>

#include "agentreg/error.hpp"
#include "agentreg/losses.hpp"

using namespace agentreg;

namespace {

double circle_oracle(const std::vector<double>& pos, const std::vector<double>& neg,
                     const LossParams& p) {
  if (pos.empty() || neg.empty()) return 0.0;
  double sp = 0.0, sn = 0.0;
  for (double d : pos) sp += std::exp(p.gamma * std::max(0.0, d - p.delta_p) * (d - p.delta_p));
  for (double d : neg) sn += std::exp(p.gamma * std::max(0.0, p.delta_n - d) * (p.delta_n - d));
  return std::log1p(sp * sn) / p.gamma;
}

std::vector<double> random_distances(std::size_t n, Rng& rng) {
  std::vector<double> d(n);
  for (double& v : d) v = rng.uniform(0.0, 2.0);
  return d;
}

// Mean over valid anchors of the circle loss on Euclidean distances between
// L2-normalized rows; anchors come from both sides.
double descriptor_oracle(const Tensor& a, const Tensor& b, const std::vector<PairLabel>& labels,
                         const LossParams& p) {
  auto unit = [](const Tensor& x, std::size_t i) {
    std::vector<double> r(x.row(i).begin(), x.row(i).end());
    double n = 0.0;
    for (double v : r) n += v * v;
    for (double& v : r) v /= std::sqrt(n);
    return r;
  };
  const std::size_t na = a.rows(), nb = b.rows();
  std::vector<std::vector<double>> d(na, std::vector<double>(nb));
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      const auto x = unit(a, i), y = unit(b, j);
      double s = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
      d[i][j] = std::sqrt(s);
    }
  double total = 0.0;
  int anchors = 0;
  auto anchor = [&](const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) return;
    total += circle_oracle(pos, neg, p);
    ++anchors;
  };
  for (std::size_t i = 0; i < na; ++i) {
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < nb; ++j) {
      if (labels[i * nb + j] == PairLabel::kPositive) pos.push_back(d[i][j]);
      if (labels[i * nb + j] == PairLabel::kNegative) neg.push_back(d[i][j]);
    }
    anchor(pos, neg);
  }
  for (std::size_t j = 0; j < nb; ++j) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < na; ++i) {
      if (labels[i * nb + j] == PairLabel::kPositive) pos.push_back(d[i][j]);
      if (labels[i * nb + j] == PairLabel::kNegative) neg.push_back(d[i][j]);
    }
    anchor(pos, neg);
  }
  return anchors ? total / anchors : 0.0;
}

std::vector<PairLabel> random_labels(std::size_t na, std::size_t nb, Rng& rng) {
  std::vector<PairLabel> labels(na * nb, PairLabel::kNegative);
  for (auto& l : labels) {
    const double u = rng.uniform();
    l = u < 0.25 ? PairLabel::kPositive : (u < 0.4 ? PairLabel::kIgnore : PairLabel::kNegative);
  }
  return labels;
}

}  // namespace

TEST_CASE("circle loss examples") {
  const LossParams p;
  CHECK(circle_loss(std::vector<double>{}, std::vector<double>{0.5}, p).value == 0.0);
  CHECK(circle_loss(std::vector<double>{0.5}, std::vector<double>{}, p).value == 0.0);
  const CircleLoss m = circle_loss(std::vector<double>{p.delta_p}, std::vector<double>{p.delta_n}, p);
  CHECK(std::abs(m.value - std::log(2.0) / p.gamma) < 1e-12);
  CHECK_THROWS_AS(circle_loss(std::vector<double>{2.5}, std::vector<double>{0.5}, p), Error);
  CHECK_THROWS_AS(circle_loss(std::vector<double>{0.5}, std::vector<double>{-0.1}, p), Error);
}

TEST_CASE("circle loss equals the formula and its gradient matches finite differences") {
  Rng rng(51);
  LossParams p;
  for (int t = 0; t < 30; ++t) {
    const auto pos = random_distances(1 + rng.uniform_index(4), rng);
    const auto neg = random_distances(1 + rng.uniform_index(6), rng);
    const CircleLoss l = circle_loss(pos, neg, p);
    CHECK(std::abs(l.value - circle_oracle(pos, neg, p)) < 1e-12 * std::max(1.0, l.value));
    CHECK(l.value > 0.0);

    Tensor x({pos.size() + neg.size()});
    for (std::size_t i = 0; i < pos.size(); ++i) x[i] = pos[i];
    for (std::size_t i = 0; i < neg.size(); ++i) x[pos.size() + i] = neg[i];
    auto f = [&](const Tensor& v) {
      return circle_loss(std::span<const double>(v.data(), pos.size()),
                         std::span<const double>(v.data() + pos.size(), neg.size()), p)
          .value;
    };
    Tensor analytic({x.size()});
    for (std::size_t i = 0; i < pos.size(); ++i) analytic[i] = l.grad_positive[i];
    for (std::size_t i = 0; i < neg.size(); ++i) analytic[pos.size() + i] = l.grad_negative[i];
    // entries below the floor are dominated by rounding in the difference quotient
    CHECK(max_relative_error(analytic, finite_diff_gradient(f, x, 1e-6), 1e-4) < 1e-4);
  }
}

TEST_CASE("circle loss monotonicity and clamped gradients") {
  Rng rng(52);
  const LossParams p;
  for (int t = 0; t < 50; ++t) {
    auto pos = random_distances(3, rng);
    auto neg = random_distances(3, rng);
    const double base = circle_loss(pos, neg, p).value;
    auto pos2 = pos;
    pos2[0] = std::min(2.0, pos2[0] + 0.1);
    CHECK(circle_loss(pos2, neg, p).value >= base);
    auto neg2 = neg;
    neg2[1] = std::min(2.0, neg2[1] + 0.1);
    CHECK(circle_loss(pos, neg2, p).value <= base);
  }
  const CircleLoss l = circle_loss(std::vector<double>{0.05, 0.5}, std::vector<double>{1.6, 0.7}, p);
  CHECK(l.grad_positive[0] == 0.0);
  CHECK(l.grad_negative[0] == 0.0);
  CHECK(l.grad_positive[1] > 0.0);
  CHECK(l.grad_negative[1] < 0.0);
}

TEST_CASE("total loss by stage") {
  LossParams p;
  CHECK(total_loss(0.5, 0.2, p, Stage::kWarmUp) == 0.5);
  CHECK(total_loss(0.5, 0.2, p, Stage::kRewardsGuided) == doctest::Approx(0.7));
  p.lambda2 = 0.0;
  CHECK(total_loss(0.5, 0.2, p, Stage::kRewardsGuided) == total_loss(0.5, 0.2, p, Stage::kWarmUp));
  LossParams bad;
  bad.delta_p = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("descriptor circle loss matches the loop oracle and finite differences") {
  Rng rng(53);
  const LossParams p;
  for (int t = 0; t < 20; ++t) {
    const std::size_t na = 2 + rng.uniform_index(3), nb = 2 + rng.uniform_index(3), c = 3;
    const Tensor a = random_normal({na, c}, rng), b = random_normal({nb, c}, rng);
    const auto labels = random_labels(na, nb, rng);
    const DescriptorLoss l = descriptor_circle_loss(a, b, labels, p);
    CHECK(std::abs(l.value - descriptor_oracle(a, b, labels, p)) < 1e-12);
    auto fa = [&](const Tensor& x) { return descriptor_circle_loss(x, b, labels, p).value; };
    auto fb = [&](const Tensor& x) { return descriptor_circle_loss(a, x, labels, p).value; };
    CHECK(max_relative_error(l.grad_a, finite_diff_gradient(fa, a, 1e-6)) < 1e-4);
    CHECK(max_relative_error(l.grad_b, finite_diff_gradient(fb, b, 1e-6)) < 1e-4);
  }
  // No anchor has both a positive and a negative.
  const Tensor a = random_normal({2, 3}, rng);
  const DescriptorLoss none =
      descriptor_circle_loss(a, a, std::vector<PairLabel>(4, PairLabel::kIgnore), p);
  CHECK(none.value == 0.0);
  CHECK(none.anchors == 0);
}
