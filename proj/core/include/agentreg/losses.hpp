#pragma once

#include <span>
#include <vector>

#include "agentreg/agents.hpp"
#include "agentreg/numerics.hpp"

namespace agentreg {

struct LossParams {
  double gamma = 10.0;
  double delta_p = 0.1;
  double delta_n = 1.4;
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  void validate() const;
};

struct CircleLoss {
  double value = 0.0;
  std::vector<double> grad_positive;
  std::vector<double> grad_negative;
};

/// Circle loss for one anchor:
///   (1/γ)·log[1 + Σ_P exp(β_p(d-Δp)) · Σ_N exp(β_n(Δn-d))]
/// with β_p = γ·max(0, d-Δp) and β_n = γ·max(0, Δn-d). The weights are
/// differentiated too, so the gradient matches finite differences.
/// Distances must lie in [0, 2]; an empty side yields 0.
CircleLoss circle_loss(std::span<const double> positive_distances,
                       std::span<const double> negative_distances,
                       const LossParams& params);

/// λ1·L_t + λ2·L_full during reward-guided epochs, λ1·L_t otherwise.
double total_loss(double task_loss, double policy_loss, const LossParams& params,
                  Stage stage);

/// Pair label between an anchor on one side and a candidate on the other.
enum class PairLabel : unsigned char { kIgnore, kPositive, kNegative };

struct DescriptorLoss {
  double value = 0.0;
  Tensor grad_a;  // same dims as the first descriptor set
  Tensor grad_b;
  std::size_t anchors = 0;
};

/// Circle loss over two descriptor sets. Distances are Euclidean between
/// L2-normalized rows (so they lie in [0, 2]). Every row of `a` and every row
/// of `b` acts as an anchor when it has at least one positive and one negative;
/// the loss is the mean over all such anchors. labels is rows(a)×rows(b).
DescriptorLoss descriptor_circle_loss(const Tensor& a, const Tensor& b,
                                      const std::vector<PairLabel>& labels,
                                      const LossParams& params);

}  // namespace agentreg
