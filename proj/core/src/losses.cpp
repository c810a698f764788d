#include "agentreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agentreg/error.hpp"

namespace agentreg {

namespace {

constexpr double kDistanceSlack = 1e-9;

double relu(double x) { return x > 0.0 ? x : 0.0; }

// log Σ exp(x_i) and the softmax weights of x.
double log_sum_exp(const std::vector<double>& x, std::vector<double>& weights) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  weights.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    weights[i] = std::exp(x[i] - m);
    z += weights[i];
  }
  for (double& w : weights) w /= z;
  return m + std::log(z);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void LossParams::validate() const {
  if (!(gamma > 0.0)) fail(ErrorKind::kConfig, "circle loss gamma must be positive");
  if (!(delta_p > 0.0 && delta_p < delta_n)) {
    fail(ErrorKind::kConfig, "circle loss margins need 0 < delta_p < delta_n");
  }
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) {
    fail(ErrorKind::kConfig, "loss weights must be non-negative");
  }
}

CircleLoss circle_loss(std::span<const double> positive_distances,
                       std::span<const double> negative_distances,
                       const LossParams& params) {
  CircleLoss out;
  out.grad_positive.assign(positive_distances.size(), 0.0);
  out.grad_negative.assign(negative_distances.size(), 0.0);
  for (double d : positive_distances) {
    if (!(d >= -kDistanceSlack && d <= 2.0 + kDistanceSlack)) {
      fail(ErrorKind::kContract, "circle loss distance outside [0, 2]");
    }
  }
  for (double d : negative_distances) {
    if (!(d >= -kDistanceSlack && d <= 2.0 + kDistanceSlack)) {
      fail(ErrorKind::kContract, "circle loss distance outside [0, 2]");
    }
  }
  if (positive_distances.empty() || negative_distances.empty()) return out;

  const double g = params.gamma;
  std::vector<double> pos_logits(positive_distances.size());
  std::vector<double> neg_logits(negative_distances.size());
  for (std::size_t j = 0; j < pos_logits.size(); ++j) {
    const double e = relu(positive_distances[j] - params.delta_p);
    pos_logits[j] = g * e * e;
  }
  for (std::size_t k = 0; k < neg_logits.size(); ++k) {
    const double e = relu(params.delta_n - negative_distances[k]);
    neg_logits[k] = g * e * e;
  }
  std::vector<double> wp, wn;
  const double lse = log_sum_exp(pos_logits, wp) + log_sum_exp(neg_logits, wn);
  out.value = softplus(lse) / g;
  // dL/d(lse) = sigmoid(lse)/γ; d logit/dd = ±2γ·relu(·).
  const double outer = sigmoid(lse) / g;
  for (std::size_t j = 0; j < wp.size(); ++j) {
    out.grad_positive[j] = outer * wp[j] * 2.0 * g * relu(positive_distances[j] - params.delta_p);
  }
  for (std::size_t k = 0; k < wn.size(); ++k) {
    out.grad_negative[k] = -outer * wn[k] * 2.0 * g * relu(params.delta_n - negative_distances[k]);
  }
  return out;
}

double total_loss(double task_loss, double policy_loss, const LossParams& params,
                  Stage stage) {
  if (stage == Stage::kRewardsGuided) {
    return params.lambda1 * task_loss + params.lambda2 * policy_loss;
  }
  return params.lambda1 * task_loss;
}

DescriptorLoss descriptor_circle_loss(const Tensor& a, const Tensor& b,
                                      const std::vector<PairLabel>& labels,
                                      const LossParams& params) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    fail(ErrorKind::kDimension, "descriptor sets must be N×C with equal C");
  }
  const std::size_t na = a.rows(), nb = b.rows(), c = a.cols();
  if (labels.size() != na * nb) fail(ErrorKind::kDimension, "label matrix size mismatch");

  // Normalized rows and inverse norms.
  auto normalize = [c](const Tensor& x, Tensor& unit, std::vector<double>& inv) {
    unit = x;
    inv.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double n = norm(x.row(i));
      inv[i] = n > 0.0 ? 1.0 / n : 0.0;
      for (std::size_t j = 0; j < c; ++j) unit(i, j) *= inv[i];
    }
  };
  Tensor ua, ub;
  std::vector<double> inv_a, inv_b;
  normalize(a, ua, inv_a);
  normalize(b, ub, inv_b);

  Tensor dist({na, nb});
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < c; ++t) {
        const double e = ua(i, t) - ub(j, t);
        s += e * e;
      }
      dist(i, j) = std::sqrt(s);
    }
  }

  Tensor grad_dist({na, nb});
  DescriptorLoss out;
  auto accumulate_anchor = [&](bool row_anchor, std::size_t anchor) {
    std::vector<double> pd, nd;
    std::vector<std::size_t> pi, ni;
    const std::size_t count = row_anchor ? nb : na;
    for (std::size_t o = 0; o < count; ++o) {
      const std::size_t i = row_anchor ? anchor : o;
      const std::size_t j = row_anchor ? o : anchor;
      const PairLabel l = labels[i * nb + j];
      if (l == PairLabel::kPositive) {
        pd.push_back(dist(i, j));
        pi.push_back(o);
      } else if (l == PairLabel::kNegative) {
        nd.push_back(dist(i, j));
        ni.push_back(o);
      }
    }
    if (pd.empty() || nd.empty()) return;
    const CircleLoss cl = circle_loss(pd, nd, params);
    out.value += cl.value;
    ++out.anchors;
    for (std::size_t q = 0; q < pi.size(); ++q) {
      const std::size_t i = row_anchor ? anchor : pi[q];
      const std::size_t j = row_anchor ? pi[q] : anchor;
      grad_dist(i, j) += cl.grad_positive[q];
    }
    for (std::size_t q = 0; q < ni.size(); ++q) {
      const std::size_t i = row_anchor ? anchor : ni[q];
      const std::size_t j = row_anchor ? ni[q] : anchor;
      grad_dist(i, j) += cl.grad_negative[q];
    }
  };
  for (std::size_t i = 0; i < na; ++i) accumulate_anchor(true, i);
  for (std::size_t j = 0; j < nb; ++j) accumulate_anchor(false, j);

  out.grad_a = Tensor(a.dims());
  out.grad_b = Tensor(b.dims());
  if (out.anchors == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.anchors);
  out.value *= scale;

  // Back through d = ‖ua - ub‖ and the row normalizations.
  Tensor gua({na, c}), gub({nb, c});
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double g = grad_dist(i, j) * scale;
      if (g == 0.0 || dist(i, j) <= 0.0) continue;
      const double k = g / dist(i, j);
      for (std::size_t t = 0; t < c; ++t) {
        const double e = (ua(i, t) - ub(j, t)) * k;
        gua(i, t) += e;
        gub(j, t) -= e;
      }
    }
  }
  auto unnormalize = [c](const Tensor& unit, const std::vector<double>& inv,
                         const Tensor& gu, Tensor& gx) {
    for (std::size_t i = 0; i < unit.rows(); ++i) {
      const double proj = dot(unit.row(i), gu.row(i));
      for (std::size_t t = 0; t < c; ++t) {
        gx(i, t) = inv[i] * (gu(i, t) - unit(i, t) * proj);
      }
    }
  };
  unnormalize(ua, inv_a, gua, out.grad_a);
  unnormalize(ub, inv_b, gub, out.grad_b);
  return out;
}

}  // namespace agentreg
