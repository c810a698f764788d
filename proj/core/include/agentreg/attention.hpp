#pragma once

// Single-head cross attention used in two places:
//  * the n-layer aggregation of the query pool against image and point tokens;
//  * the agent-bridged interaction, where k agents summarize each modality and
//    every feature then reads the other modality's summaries back through the
//    agents (a two-hop bottleneck with residual connections).
//
// Row convention: tokens are rows, projections are right-multiplied (X·W).

#include <cstddef>
#include <vector>

#include "agentreg/numerics.hpp"

namespace agentreg {

struct AttentionLayerWeights {
  Tensor w_query;  // C×C
  Tensor w_image;  // C×C, shared key/value projection of image tokens
  Tensor w_point;  // C×C, shared key/value projection of point tokens
  Tensor ffn_w1;   // C×H
  Tensor ffn_b1;   // H
  Tensor ffn_w2;   // H×C
  Tensor ffn_b2;   // C
};

struct RaiWeights {
  Tensor w_query;  // W^Q
  Tensor w_point;  // W^P
  Tensor w_image;  // W^I
};

struct AttentionWeights {
  std::vector<AttentionLayerWeights> layers;
  RaiWeights rai;

  std::size_t channels() const { return rai.w_query.rows(); }

  static AttentionWeights zeros(std::size_t channels, std::size_t num_layers,
                                std::size_t hidden);
  /// Gaussian projections with stddev `scale`/√C; feed-forward starts at zero.
  static AttentionWeights random(std::size_t channels, std::size_t num_layers,
                                 std::size_t hidden, Rng& rng, double scale = 1.0);
  void validate() const;
};

/// Fixed 2D sinusoidal encoding of pixel centers (P×2, u then v), P×C.
Tensor sinusoidal_encoding_2d(const Tensor& centers, std::size_t channels,
                              double wavelength = 256.0, double amplitude = 1.0);

// ---------------------------------------------------------------------------
// Query aggregation

struct IasLayerCache {
  Tensor input;       // M×C
  Tensor q;           // M×C
  Tensor kv;          // (P_i+P_p)×C
  Tensor attn;        // M×(P_i+P_p)
  Tensor mid;         // after the attention residual
  Tensor hidden_pre;  // M×H
  Tensor hidden;      // M×H
};

struct IasCache {
  Tensor image_tokens;  // F_i (+ positional term)
  Tensor point_tokens;
  std::vector<IasLayerCache> layers;
};

/// Q_A: the queries after n layers of cross attention over the image and
/// point tokens, each followed by a residual feed-forward.
Tensor ias_aggregate(const Tensor& queries, const Tensor& image_features,
                     const Tensor& point_features, const AttentionWeights& w,
                     IasCache* cache = nullptr,
                     const Tensor* image_pos = nullptr,
                     const Tensor* point_pos = nullptr);

struct IasGrads {
  std::vector<AttentionLayerWeights> layers;
  Tensor queries;
  Tensor image;  // w.r.t. image tokens (also the positional-term gradient)
  Tensor point;
};

IasGrads ias_backward(const IasCache& cache, const AttentionWeights& w,
                      const Tensor& grad_output);

// ---------------------------------------------------------------------------
// Reliable agents interaction

struct RaiResult {
  Tensor image_out;  // F_i'
  Tensor point_out;  // F_p'
  Tensor iaa;        // k×P_p, agents over point keys
  Tensor paa;        // k×P_i, agents over image keys
  Tensor image_to_agent;  // P_i×k, image features over agents
  Tensor point_to_agent;  // P_p×k
};

struct RaiCache {
  Tensor agents;        // unmasked agents
  std::vector<double> masks;
  Tensor masked;        // agents scaled by masks
  Tensor q, k_image, k_point;
  Tensor image_tokens, point_tokens;  // inputs to the projections
  Tensor summary_point;  // IAA·V_p
  Tensor summary_image;  // PAA·V_i
  RaiResult result;
};

/// Agents (k×C) are scaled by their soft masks, projected by W^Q, and
/// attend to W^P·F_p and W^I·F_i; each feature then attends back over the
/// agents and receives the other modality's summaries plus its own residual.
/// Positional terms, when given, enter the projections but not the residual.
RaiResult rai_attention(const Tensor& agents, const Tensor& image_features,
                        const Tensor& point_features,
                        const std::vector<double>& masks, const RaiWeights& w,
                        RaiCache* cache = nullptr,
                        const Tensor* image_pos = nullptr,
                        const Tensor* point_pos = nullptr);

struct RaiGrads {
  RaiWeights weights;
  Tensor agents;               // w.r.t. the unmasked agents
  std::vector<double> masks;
  Tensor image;                // w.r.t. F_i (residual + projection paths)
  Tensor point;
  Tensor image_projection;     // projection path only (positional gradient)
  Tensor point_projection;
};

RaiGrads attention_backward(const RaiCache& cache, const RaiWeights& w,
                            const Tensor& grad_image_out,
                            const Tensor& grad_point_out);

}  // namespace agentreg
