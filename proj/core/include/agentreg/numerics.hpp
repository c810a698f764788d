#pragma once

// Dense double-precision tensors and the kernels built on them, including the
// 3-layer convolution stack used as the phase adaptor.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace agentreg {

/// Row-major n-dimensional array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * dims_[1] + j];
  }
  const double& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * dims_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t c) noexcept {
    return data_[(i * dims_[1] + j) * dims_[2] + c];
  }
  const double& operator()(std::size_t i, std::size_t j, std::size_t c) const noexcept {
    return data_[(i * dims_[1] + j) * dims_[2] + c];
  }

  /// Row view of a rank-2 tensor.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;

  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  Tensor reshaped(std::vector<std::size_t> dims) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool all_finite() const noexcept;
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// a (m×k) · b (k×n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// a (m×k) · bᵀ where b is n×k.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b where a is k×m and b is k×n.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Stacks the rows of a and b (same column count).
Tensor vstack(const Tensor& a, const Tensor& b);
/// Mean over rows, returning a length-cols vector.
Tensor mean_rows(const Tensor& a);
/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double sum(const Tensor& a);
/// Largest elementwise |a - b|; dims must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

struct ComplexTensor {
  Tensor re;
  Tensor im;

  const std::vector<std::size_t>& dims() const noexcept { return re.dims(); }
};

/// F(u,v) = Σ_{i,j} x(i,j)·exp(-2πJ(ui/H + vj/W)), evaluated directly.
ComplexTensor dft2(const Tensor& x);
ComplexTensor dft2(const ComplexTensor& x);
/// Inverse with 1/(HW) normalization.
ComplexTensor idft2(const ComplexTensor& f);

/// Max-subtracted softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& logits, std::size_t axis);
/// Row-wise softmax of a rank-2 tensor.
Tensor softmax_rows(const Tensor& logits);
/// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad_y);

double sigmoid(double x) noexcept;
/// Throws kDegenerateInput when either operand has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double leaky_relu(double x, double negative_slope) noexcept;

/// One 3×3 zero-padded convolution. kernel dims {3, 3, in, out}.
struct ConvLayer {
  Tensor kernel;
  Tensor bias;

  std::size_t in_channels() const { return kernel.dim(2); }
  std::size_t out_channels() const { return kernel.dim(3); }
};

struct ConvStackWeights {
  std::array<ConvLayer, 3> layers;
  /// Leaky-rectifier slope between layers; 1.0 makes the stack linear.
  double negative_slope = 0.01;

  static ConvStackWeights zeros(std::size_t in_channels, std::size_t hidden,
                                std::size_t out_channels);
  std::size_t in_channels() const { return layers[0].in_channels(); }
  std::size_t out_channels() const { return layers[2].out_channels(); }
};

/// Activations kept by the forward pass for backpropagation.
struct ConvStackCache {
  std::array<Tensor, 3> inputs;       // input to each layer
  std::array<Tensor, 3> pre_activations;
};

Tensor conv3x3(const Tensor& x, const ConvLayer& layer);
Tensor conv_stack_forward(const Tensor& x, const ConvStackWeights& w,
                          ConvStackCache* cache = nullptr);

struct ConvStackGrads {
  std::array<ConvLayer, 3> layers;
  Tensor input;
};

ConvStackGrads conv_stack_backward(const ConvStackCache& cache,
                                   const ConvStackWeights& w,
                                   const Tensor& grad_output);

/// Central differences (f(x+h e_k) - f(x-h e_k)) / 2h for every coordinate.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h = 1e-5);

/// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor); used by every gradient check.
double max_relative_error(const Tensor& analytic, const Tensor& numeric,
                          double floor = 1e-6);

/// Counter-based generator: output n is splitmix64(seed + n·golden). The whole
/// state is (seed, counter), so it can be checkpointed and replayed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t counter)
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept {
    return mean + stddev * normal();
  }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) noexcept;
  /// Independent stream keyed by `stream`; does not advance this generator.
  Rng derive(std::uint64_t stream) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

Tensor random_normal(std::vector<std::size_t> dims, Rng& rng,
                     double stddev = 1.0);

// Binary tensor file: "A2SI", u32 version, u32 ndim, u32 dims..., f64 data,
// all little-endian. Complex tensors write the real plane then the imaginary.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
void write_complex_tensor(std::ostream& out, const ComplexTensor& t);
Tensor read_tensor(std::istream& in);
ComplexTensor read_complex_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace agentreg
