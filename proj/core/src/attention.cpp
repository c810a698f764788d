#include "agentreg/attention.hpp"

#include <cmath>
#include <string>

#include "agentreg/error.hpp"

namespace agentreg {

namespace {

constexpr double kFfnSlope = 0.01;

Tensor scale_rows(const Tensor& x, const std::vector<double>& s) {
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double& v : out.row(i)) v *= s[i];
  }
  return out;
}

Tensor with_pos(const Tensor& x, const Tensor* pos) {
  if (!pos) return x;
  return x + *pos;
}

Tensor add_bias(Tensor x, const Tensor& b) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += b[j];
  }
  return x;
}

Tensor column_sums(const Tensor& x) {
  Tensor out({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  std::vector<double> data(x.data() + begin * x.cols(), x.data() + end * x.cols());
  return Tensor({end - begin, x.cols()}, std::move(data));
}

void require_square(const Tensor& w, std::size_t c, const char* name) {
  if (w.rank() != 2 || w.rows() != c || w.cols() != c) {
    fail(ErrorKind::kDimension, std::string(name) + " must be C×C");
  }
}

void require_tokens(const Tensor& x, std::size_t c, const char* name) {
  if (x.rank() != 2 || x.cols() != c) {
    fail(ErrorKind::kDimension, std::string(name) + " must have " +
                                    std::to_string(c) + " channels");
  }
}

}  // namespace

AttentionWeights AttentionWeights::zeros(std::size_t channels,
                                         std::size_t num_layers,
                                         std::size_t hidden) {
  if (num_layers < 1) fail(ErrorKind::kConfig, "at least one attention layer");
  AttentionWeights w;
  w.layers.resize(num_layers);
  for (auto& l : w.layers) {
    l.w_query = Tensor({channels, channels});
    l.w_image = Tensor({channels, channels});
    l.w_point = Tensor({channels, channels});
    l.ffn_w1 = Tensor({channels, hidden});
    l.ffn_b1 = Tensor({hidden});
    l.ffn_w2 = Tensor({hidden, channels});
    l.ffn_b2 = Tensor({channels});
  }
  w.rai.w_query = Tensor({channels, channels});
  w.rai.w_point = Tensor({channels, channels});
  w.rai.w_image = Tensor({channels, channels});
  return w;
}

AttentionWeights AttentionWeights::random(std::size_t channels,
                                          std::size_t num_layers,
                                          std::size_t hidden, Rng& rng,
                                          double scale) {
  AttentionWeights w = zeros(channels, num_layers, hidden);
  const double sd = scale / std::sqrt(static_cast<double>(channels));
  auto fill = [&](Tensor& t) {
    for (double& v : t.values()) v = sd * rng.normal();
  };
  for (auto& l : w.layers) {
    fill(l.w_query);
    fill(l.w_image);
    fill(l.w_point);
  }
  fill(w.rai.w_query);
  fill(w.rai.w_point);
  fill(w.rai.w_image);
  return w;
}

void AttentionWeights::validate() const {
  const std::size_t c = channels();
  if (layers.empty()) fail(ErrorKind::kConfig, "at least one attention layer");
  require_square(rai.w_query, c, "W^Q");
  require_square(rai.w_point, c, "W^P");
  require_square(rai.w_image, c, "W^I");
  for (const auto& l : layers) {
    require_square(l.w_query, c, "layer query projection");
    require_square(l.w_image, c, "layer image projection");
    require_square(l.w_point, c, "layer point projection");
    const std::size_t h = l.ffn_w1.cols();
    if (l.ffn_w1.rows() != c || l.ffn_b1.size() != h || l.ffn_w2.rows() != h ||
        l.ffn_w2.cols() != c || l.ffn_b2.size() != c) {
      fail(ErrorKind::kDimension, "feed-forward weights are inconsistent");
    }
  }
}

Tensor sinusoidal_encoding_2d(const Tensor& centers, std::size_t channels,
                              double wavelength, double amplitude) {
  if (centers.rank() != 2 || centers.cols() != 2) {
    fail(ErrorKind::kDimension, "centers must be P×2");
  }
  // First half of the channels encodes u, second half v; sin/cos pairs at
  // geometrically spaced frequencies.
  Tensor out({centers.rows(), channels});
  const std::size_t half = channels / 2;
  for (std::size_t p = 0; p < centers.rows(); ++p) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const std::size_t base = axis * half;
      const std::size_t width = axis == 0 ? half : channels - half;
      for (std::size_t t = 0; t < width; ++t) {
        const std::size_t pair = t / 2;
        const double freq = 1.0 / std::pow(wavelength, 2.0 * static_cast<double>(pair) /
                                                           static_cast<double>(width));
        const double a = centers(p, axis) * freq;
        out(p, base + t) = amplitude * (t % 2 == 0 ? std::sin(a) : std::cos(a));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor ias_aggregate(const Tensor& queries, const Tensor& image_features,
                     const Tensor& point_features, const AttentionWeights& w,
                     IasCache* cache, const Tensor* image_pos,
                     const Tensor* point_pos) {
  w.validate();
  const std::size_t c = w.channels();
  require_tokens(queries, c, "queries");
  require_tokens(image_features, c, "image features");
  require_tokens(point_features, c, "point features");
  const Tensor xi = with_pos(image_features, image_pos);
  const Tensor xp = with_pos(point_features, point_pos);
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  if (cache) {
    cache->image_tokens = xi;
    cache->point_tokens = xp;
    cache->layers.clear();
  }
  Tensor x = queries;
  for (const auto& l : w.layers) {
    IasLayerCache lc;
    lc.input = x;
    lc.q = matmul(x, l.w_query);
    lc.kv = vstack(matmul(xi, l.w_image), matmul(xp, l.w_point));
    lc.attn = softmax_rows(matmul_nt(lc.q, lc.kv) * s);
    lc.mid = x + matmul(lc.attn, lc.kv);
    lc.hidden_pre = add_bias(matmul(lc.mid, l.ffn_w1), l.ffn_b1);
    lc.hidden = lc.hidden_pre;
    for (double& v : lc.hidden.values()) v = leaky_relu(v, kFfnSlope);
    x = lc.mid + add_bias(matmul(lc.hidden, l.ffn_w2), l.ffn_b2);
    if (cache) cache->layers.push_back(std::move(lc));
  }
  return x;
}

IasGrads ias_backward(const IasCache& cache, const AttentionWeights& w,
                      const Tensor& grad_output) {
  const std::size_t c = w.channels();
  const std::size_t pi = cache.image_tokens.rows();
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  IasGrads g;
  g.layers.resize(w.layers.size());
  g.image = Tensor(cache.image_tokens.dims());
  g.point = Tensor(cache.point_tokens.dims());
  Tensor dx = grad_output;
  for (std::size_t step = 0; step < w.layers.size(); ++step) {
    const std::size_t li = w.layers.size() - 1 - step;
    const auto& l = w.layers[li];
    const auto& lc = cache.layers[li];
    auto& gl = g.layers[li];

    // x_out = mid + hidden·W2 + b2
    gl.ffn_w2 = matmul_tn(lc.hidden, dx);
    gl.ffn_b2 = column_sums(dx);
    Tensor dh = matmul_nt(dx, l.ffn_w2);
    for (std::size_t i = 0; i < dh.size(); ++i) {
      if (lc.hidden_pre[i] < 0.0) dh[i] *= kFfnSlope;
    }
    gl.ffn_w1 = matmul_tn(lc.mid, dh);
    gl.ffn_b1 = column_sums(dh);
    Tensor dmid = dx + matmul_nt(dh, l.ffn_w1);

    // mid = input + attn·kv
    Tensor dattn = matmul_nt(dmid, lc.kv);
    Tensor dkv = matmul_tn(lc.attn, dmid);
    Tensor dlogits = softmax_rows_backward(lc.attn, dattn) * s;
    Tensor dq = matmul(dlogits, lc.kv);
    dkv += matmul_tn(dlogits, lc.q);

    const Tensor dki = slice_rows(dkv, 0, pi);
    const Tensor dkp = slice_rows(dkv, pi, dkv.rows());
    gl.w_image = matmul_tn(cache.image_tokens, dki);
    gl.w_point = matmul_tn(cache.point_tokens, dkp);
    g.image += matmul_nt(dki, l.w_image);
    g.point += matmul_nt(dkp, l.w_point);

    gl.w_query = matmul_tn(lc.input, dq);
    dx = dmid + matmul_nt(dq, l.w_query);
  }
  g.queries = std::move(dx);
  return g;
}

// ---------------------------------------------------------------------------

RaiResult rai_attention(const Tensor& agents, const Tensor& image_features,
                        const Tensor& point_features,
                        const std::vector<double>& masks, const RaiWeights& w,
                        RaiCache* cache, const Tensor* image_pos,
                        const Tensor* point_pos) {
  if (agents.rank() != 2 || agents.rows() == 0) {
    fail(ErrorKind::kConfig, "reliable agent interaction needs k >= 1 agents");
  }
  const std::size_t c = agents.cols();
  require_square(w.w_query, c, "W^Q");
  require_square(w.w_point, c, "W^P");
  require_square(w.w_image, c, "W^I");
  require_tokens(image_features, c, "image features");
  require_tokens(point_features, c, "point features");
  if (masks.size() != agents.rows()) {
    fail(ErrorKind::kDimension, "one soft mask per agent is required");
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(c));

  RaiCache local;
  RaiCache& rc = cache ? *cache : local;
  rc.agents = agents;
  rc.masks = masks;
  rc.masked = scale_rows(agents, masks);
  rc.image_tokens = with_pos(image_features, image_pos);
  rc.point_tokens = with_pos(point_features, point_pos);
  rc.q = matmul(rc.masked, w.w_query);
  rc.k_point = matmul(rc.point_tokens, w.w_point);
  rc.k_image = matmul(rc.image_tokens, w.w_image);

  RaiResult& r = rc.result;
  r.iaa = softmax_rows(matmul_nt(rc.q, rc.k_point) * s);
  r.paa = softmax_rows(matmul_nt(rc.q, rc.k_image) * s);
  rc.summary_point = matmul(r.iaa, rc.k_point);
  rc.summary_image = matmul(r.paa, rc.k_image);
  r.image_to_agent = softmax_rows(matmul_nt(rc.k_image, rc.q) * s);
  r.point_to_agent = softmax_rows(matmul_nt(rc.k_point, rc.q) * s);
  r.image_out = image_features + matmul(r.image_to_agent, rc.summary_point);
  r.point_out = point_features + matmul(r.point_to_agent, rc.summary_image);
  return r;
}

RaiGrads attention_backward(const RaiCache& rc, const RaiWeights& w,
                            const Tensor& grad_image_out,
                            const Tensor& grad_point_out) {
  const RaiResult& r = rc.result;
  const double s = 1.0 / std::sqrt(static_cast<double>(rc.agents.cols()));
  RaiGrads g;

  // Second hop: F_i' = F_i + B_i·S_p, F_p' = F_p + B_p·S_i.
  Tensor d_sp = matmul_tn(r.image_to_agent, grad_image_out);
  Tensor d_si = matmul_tn(r.point_to_agent, grad_point_out);
  const Tensor d_li =
      softmax_rows_backward(r.image_to_agent, matmul_nt(grad_image_out, rc.summary_point)) * s;
  const Tensor d_lp =
      softmax_rows_backward(r.point_to_agent, matmul_nt(grad_point_out, rc.summary_image)) * s;
  Tensor d_ki = matmul(d_li, rc.q);
  Tensor d_kp = matmul(d_lp, rc.q);
  Tensor d_q = matmul_tn(d_li, rc.k_image) + matmul_tn(d_lp, rc.k_point);

  // First hop: S_p = IAA·K_p, S_i = PAA·K_i (values share the key projection).
  d_kp += matmul_tn(r.iaa, d_sp);
  d_ki += matmul_tn(r.paa, d_si);
  const Tensor d_iaa = softmax_rows_backward(r.iaa, matmul_nt(d_sp, rc.k_point)) * s;
  const Tensor d_paa = softmax_rows_backward(r.paa, matmul_nt(d_si, rc.k_image)) * s;
  d_q += matmul(d_iaa, rc.k_point);
  d_q += matmul(d_paa, rc.k_image);
  d_kp += matmul_tn(d_iaa, rc.q);
  d_ki += matmul_tn(d_paa, rc.q);

  g.weights.w_point = matmul_tn(rc.point_tokens, d_kp);
  g.weights.w_image = matmul_tn(rc.image_tokens, d_ki);
  g.weights.w_query = matmul_tn(rc.masked, d_q);
  g.point_projection = matmul_nt(d_kp, w.w_point);
  g.image_projection = matmul_nt(d_ki, w.w_image);
  g.image = grad_image_out + g.image_projection;
  g.point = grad_point_out + g.point_projection;

  const Tensor d_masked = matmul_nt(d_q, w.w_query);
  g.agents = scale_rows(d_masked, rc.masks);
  g.masks.resize(rc.masks.size());
  for (std::size_t i = 0; i < rc.masks.size(); ++i) {
    g.masks[i] = dot(rc.agents.row(i), d_masked.row(i));
  }
  return g;
}

}  // namespace agentreg
