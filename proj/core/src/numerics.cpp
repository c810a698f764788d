#include "agentreg/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "agentreg/error.hpp"

namespace agentreg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kDegenerateInput: return "degenerate input";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kDegenerateConfiguration: return "degenerate configuration";
    case ErrorKind::kEstimationFailure: return "estimation failure";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kNumerical: return "numerical failure";
  }
  return "unknown error";
}

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    fail(ErrorKind::kDimension, std::string(op) + ": " + dims_string(a.dims()) +
                                    " vs " + dims_string(b.dims()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    fail(ErrorKind::kDimension, std::string(op) + ": expected rank " +
                                    std::to_string(rank) + ", got " +
                                    dims_string(a.dims()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : dims_(std::move(dims)), data_(product(dims_), fill) {
  for (std::size_t d : dims_) {
    if (d == 0) fail(ErrorKind::kDimension, "tensor dims must be positive");
  }
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  for (std::size_t d : dims_) {
    if (d == 0) fail(ErrorKind::kDimension, "tensor dims must be positive");
  }
  if (product(dims_) != data_.size()) {
    fail(ErrorKind::kDimension, "tensor data length " +
                                    std::to_string(data_.size()) +
                                    " does not match dims " + dims_string(dims_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    fail(ErrorKind::kDimension, "axis " + std::to_string(axis) +
                                    " out of range for " + dims_string(dims_));
  }
  return dims_[axis];
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t c = dims_[1];
  return {data_.data() + i * c, c};
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t c = dims_[1];
  return {data_.data() + i * c, c};
}

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const {
  return Tensor(std::move(dims), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_dims(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_dims(*this, other, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    fail(ErrorKind::kDimension,
         "matmul: " + dims_string(a.dims()) + " · " + dims_string(b.dims()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.cols() != b.cols()) {
    fail(ErrorKind::kDimension, "matmul_nt: " + dims_string(a.dims()) +
                                    " · " + dims_string(b.dims()) + "ᵀ");
  }
  Tensor out({a.rows(), b.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.rows() != b.rows()) {
    fail(ErrorKind::kDimension, "matmul_tn: " + dims_string(a.dims()) + "ᵀ · " +
                                    dims_string(b.dims()));
  }
  Tensor out({a.cols(), b.cols()});
  for (std::size_t p = 0; p < a.rows(); ++p) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += api * b(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "vstack");
  require_rank(b, 2, "vstack");
  if (a.cols() != b.cols()) fail(ErrorKind::kDimension, "vstack: column mismatch");
  std::vector<double> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.rows() + b.rows(), a.cols()}, std::move(data));
}

Tensor mean_rows(const Tensor& a) {
  require_rank(a, 2, "mean_rows");
  Tensor out({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  }
  out *= 1.0 / static_cast<double>(a.rows());
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::kDimension, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
  return std::accumulate(a.values().begin(), a.values().end(), 0.0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// DFT

namespace {

ComplexTensor dft2_impl(const Tensor& re, const Tensor* im, double sign,
                        double scale) {
  if (re.rank() != 2 || re.empty()) {
    fail(ErrorKind::kDimension, "dft2 expects a non-empty H×W tensor");
  }
  const std::size_t h = re.rows(), w = re.cols();
  // Twiddles indexed by (u·i mod H) so every exponent is reduced exactly.
  std::vector<double> cos_h(h), sin_h(h), cos_w(w), sin_w(w);
  for (std::size_t n = 0; n < h; ++n) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(h);
    cos_h[n] = std::cos(a);
    sin_h[n] = sign * std::sin(a);
  }
  for (std::size_t n = 0; n < w; ++n) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(w);
    cos_w[n] = std::cos(a);
    sin_w[n] = sign * std::sin(a);
  }
  ComplexTensor out{Tensor({h, w}), Tensor({h, w})};
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      double sr = 0.0, si = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        const std::size_t ti = (u * i) % h;
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t tj = (v * j) % w;
          // e^{sign·J(a+b)} = (cos a cos b - sin a sin b) + J(sin a cos b + cos a sin b)
          const double c = cos_h[ti] * cos_w[tj] - sin_h[ti] * sin_w[tj];
          const double s = sin_h[ti] * cos_w[tj] + cos_h[ti] * sin_w[tj];
          const double xr = re(i, j);
          const double xi = im ? (*im)(i, j) : 0.0;
          sr += xr * c - xi * s;
          si += xr * s + xi * c;
        }
      }
      out.re(u, v) = sr * scale;
      out.im(u, v) = si * scale;
    }
  }
  return out;
}

}  // namespace

ComplexTensor dft2(const Tensor& x) { return dft2_impl(x, nullptr, -1.0, 1.0); }

ComplexTensor dft2(const ComplexTensor& x) {
  require_same_dims(x.re, x.im, "dft2");
  return dft2_impl(x.re, &x.im, -1.0, 1.0);
}

ComplexTensor idft2(const ComplexTensor& f) {
  if (f.re.rank() != 2 || f.re.empty()) {
    fail(ErrorKind::kDimension, "idft2 expects a non-empty H×W tensor");
  }
  require_same_dims(f.re, f.im, "idft2");
  const double scale = 1.0 / static_cast<double>(f.re.size());
  return dft2_impl(f.re, &f.im, 1.0, scale);
}

// ---------------------------------------------------------------------------
// Nonlinearities

Tensor softmax(const Tensor& logits, std::size_t axis) {
  if (logits.rank() == 1) {
    if (axis != 0) fail(ErrorKind::kDimension, "softmax: axis out of range");
    return softmax_rows(logits.reshaped({1, logits.size()})).reshaped(logits.dims());
  }
  require_rank(logits, 2, "softmax");
  if (axis == 1) return softmax_rows(logits);
  if (axis == 0) return transpose(softmax_rows(transpose(logits)));
  fail(ErrorKind::kDimension, "softmax: axis out of range");
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  Tensor out = logits;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_y) {
  require_same_dims(y, grad_y, "softmax_rows_backward");
  Tensor out({y.rows(), y.cols()});
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double s = dot(y.row(i), grad_y.row(i));
    for (std::size_t j = 0; j < y.cols(); ++j) {
      out(i, j) = y(i, j) * (grad_y(i, j) - s);
    }
  }
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    fail(ErrorKind::kDegenerateInput, "cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double leaky_relu(double x, double negative_slope) noexcept {
  return x >= 0.0 ? x : negative_slope * x;
}

// ---------------------------------------------------------------------------
// Convolution stack

ConvStackWeights ConvStackWeights::zeros(std::size_t in_channels,
                                         std::size_t hidden,
                                         std::size_t out_channels) {
  ConvStackWeights w;
  const std::array<std::size_t, 4> ch{in_channels, hidden, hidden, out_channels};
  for (std::size_t l = 0; l < 3; ++l) {
    w.layers[l].kernel = Tensor({3, 3, ch[l], ch[l + 1]});
    w.layers[l].bias = Tensor({ch[l + 1]});
  }
  return w;
}

Tensor conv3x3(const Tensor& x, const ConvLayer& layer) {
  if (x.rank() != 3) fail(ErrorKind::kDimension, "conv3x3 expects H×W×C input");
  if (layer.kernel.rank() != 4 || layer.kernel.dim(0) != 3 ||
      layer.kernel.dim(1) != 3 || layer.kernel.dim(2) != x.dim(2) ||
      layer.bias.size() != layer.kernel.dim(3)) {
    fail(ErrorKind::kDimension, "conv3x3: kernel " + dims_string(layer.kernel.dims()) +
                                    " incompatible with input " + dims_string(x.dims()));
  }
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t cout = layer.out_channels();
  Tensor out({h, w, cout});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double* o = &out(i, j, 0);
      for (std::size_t co = 0; co < cout; ++co) o[co] = layer.bias[co];
      for (int di = -1; di <= 1; ++di) {
        const long ii = static_cast<long>(i) + di;
        if (ii < 0 || ii >= static_cast<long>(h)) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const long jj = static_cast<long>(j) + dj;
          if (jj < 0 || jj >= static_cast<long>(w)) continue;
          const double* xin = &x(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
          const double* k = &layer.kernel.data()[((di + 1) * 3 + (dj + 1)) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xin[ci];
            if (xv == 0.0) continue;
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * k[ci * cout + co];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_stack_forward(const Tensor& x, const ConvStackWeights& w,
                          ConvStackCache* cache) {
  Tensor act = x;
  for (std::size_t l = 0; l < 3; ++l) {
    if (cache) cache->inputs[l] = act;
    Tensor pre = conv3x3(act, w.layers[l]);
    if (cache) cache->pre_activations[l] = pre;
    if (l < 2) {
      for (double& v : pre.values()) v = leaky_relu(v, w.negative_slope);
    }
    act = std::move(pre);
  }
  return act;
}

ConvStackGrads conv_stack_backward(const ConvStackCache& cache,
                                   const ConvStackWeights& w,
                                   const Tensor& grad_output) {
  ConvStackGrads grads;
  Tensor g = grad_output;
  for (std::size_t step = 0; step < 3; ++step) {
    const std::size_t l = 2 - step;
    if (l < 2) {
      const Tensor& pre = cache.pre_activations[l];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pre[i] < 0.0) g[i] *= w.negative_slope;
      }
    }
    const Tensor& x = cache.inputs[l];
    const ConvLayer& layer = w.layers[l];
    const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const std::size_t cout = layer.out_channels();
    ConvLayer gl{Tensor(layer.kernel.dims()), Tensor(layer.bias.dims())};
    Tensor gx(x.dims());
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < wd; ++j) {
        const double* go = &g(i, j, 0);
        for (std::size_t co = 0; co < cout; ++co) gl.bias[co] += go[co];
        for (int di = -1; di <= 1; ++di) {
          const long ii = static_cast<long>(i) + di;
          if (ii < 0 || ii >= static_cast<long>(h)) continue;
          for (int dj = -1; dj <= 1; ++dj) {
            const long jj = static_cast<long>(j) + dj;
            if (jj < 0 || jj >= static_cast<long>(wd)) continue;
            const auto si = static_cast<std::size_t>(ii), sj = static_cast<std::size_t>(jj);
            const std::size_t tap = static_cast<std::size_t>((di + 1) * 3 + (dj + 1)) * cin * cout;
            const double* xin = &x(si, sj, 0);
            double* gxin = &gx(si, sj, 0);
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* k = &layer.kernel.data()[tap + ci * cout];
              double* gk = &gl.kernel.data()[tap + ci * cout];
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) {
                gk[co] += xin[ci] * go[co];
                acc += k[co] * go[co];
              }
              gxin[ci] += acc;
            }
          }
        }
      }
    }
    grads.layers[l] = std::move(gl);
    g = std::move(gx);
  }
  grads.input = std::move(g);
  return grads;
}

// ---------------------------------------------------------------------------
// Gradient checking

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kContract, "finite difference step must be positive");
  Tensor grad(x.dims());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = f(probe);
    probe[k] = orig - h;
    const double fm = f(probe);
    probe[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      fail(ErrorKind::kNumerical,
           "non-finite function value at coordinate " + std::to_string(k));
    }
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric,
                          double floor) {
  require_same_dims(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t key = splitmix64(seed_);
  return splitmix64(key ^ (counter_++ * 0xd1342543de82ef95ULL));
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() noexcept {
  // Box-Muller; the second variate is discarded.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) noexcept {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

Rng Rng::derive(std::uint64_t stream) const noexcept {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

Tensor random_normal(std::vector<std::size_t> dims, Rng& rng, double stddev) {
  Tensor t(std::move(dims));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------
// Binary tensor I/O

namespace {

constexpr char kMagic[4] = {'A', '2', 'S', 'I'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    fail(ErrorKind::kFormat, "truncated tensor header");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    fail(ErrorKind::kFormat, "truncated tensor data");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void write_header(std::ostream& out, const std::vector<std::size_t>& dims) {
  out.write(kMagic, 4);
  put_u32(out, kTensorFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) put_u32(out, static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    fail(ErrorKind::kFormat, "bad tensor magic");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kTensorFormatVersion) {
    fail(ErrorKind::kFormat, "unsupported tensor format version " + std::to_string(version));
  }
  const std::uint32_t ndim = get_u32(in);
  if (ndim == 0 || ndim > 8) fail(ErrorKind::kFormat, "bad tensor rank");
  std::vector<std::size_t> dims(ndim);
  for (auto& d : dims) {
    d = get_u32(in);
    if (d == 0) fail(ErrorKind::kFormat, "zero tensor dimension");
  }
  return dims;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  write_header(out, t.dims());
  for (double v : t.values()) put_f64(out, v);
}

void write_complex_tensor(std::ostream& out, const ComplexTensor& t) {
  require_same_dims(t.re, t.im, "write_complex_tensor");
  write_header(out, t.re.dims());
  for (double v : t.re.values()) put_f64(out, v);
  for (double v : t.im.values()) put_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  auto dims = read_header(in);
  Tensor t(std::move(dims));
  for (double& v : t.values()) v = get_f64(in);
  return t;
}

ComplexTensor read_complex_tensor(std::istream& in) {
  auto dims = read_header(in);
  ComplexTensor t{Tensor(dims), Tensor(dims)};
  for (double& v : t.re.values()) v = get_f64(in);
  for (double& v : t.im.values()) v = get_f64(in);
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  write_tensor(out, t);
  if (!out) fail(ErrorKind::kIo, "failed writing " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  Tensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::kFormat, path + ": trailing bytes after tensor");
  }
  return t;
}

}  // namespace agentreg
