#include <doctest.h>

#include <cmath>
#include <sstream>

#include "agentreg/error.hpp"
#include "agentreg/numerics.hpp"
#include "test_support.hpp"

using namespace agentreg;
using agentreg::testing::dft_oracle;
using agentreg::testing::max_abs;
using agentreg::testing::to_complex;

TEST_CASE("dft2 of a 2x2 grid") {
  const ComplexTensor f = dft2(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(f.re(0, 0) == doctest::Approx(10.0));
  CHECK(f.re(0, 1) == doctest::Approx(-2.0));
  CHECK(f.re(1, 0) == doctest::Approx(-4.0));
  CHECK(std::abs(f.re(1, 1)) < 1e-12);
  for (double v : f.im.values()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("dft2 of a constant image concentrates at DC") {
  const Tensor x({3, 5}, 2.5);
  const ComplexTensor f = dft2(x);
  for (std::size_t u = 0; u < 3; ++u) {
    for (std::size_t v = 0; v < 5; ++v) {
      const double expect = (u == 0 && v == 0) ? 2.5 * 15 : 0.0;
      CHECK(std::abs(f.re(u, v) - expect) < 1e-12);
      CHECK(std::abs(f.im(u, v)) < 1e-12);
    }
  }
}

TEST_CASE("dft2 rejects an empty tensor") {
  try {
    dft2(Tensor());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
}

TEST_CASE("dft2 and idft2 agree with the double-loop oracle") {
  Rng rng(11);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 3}, {1, 6}, {7, 7}}) {
    ComplexTensor x{random_normal({h, w}, rng), random_normal({h, w}, rng)};
    const auto fx = dft2(x);
    CHECK(max_abs(to_complex(fx), dft_oracle(to_complex(x), h, w, -1)) < 1e-10);
    const auto ix = idft2(x);
    CHECK(max_abs(to_complex(ix), dft_oracle(to_complex(x), h, w, +1)) < 1e-12);
  }
}

TEST_CASE("idft2 inverts dft2") {
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const ComplexTensor back = idft2(dft2(x));
  CHECK(max_abs_diff(back.re, x) < 1e-12);
  for (double v : back.im.values()) CHECK(std::abs(v) < 1e-12);

  Rng rng(3);
  const Tensor r = random_normal({8, 8}, rng);
  const ComplexTensor rb = idft2(dft2(r));
  CHECK(max_abs_diff(rb.re, r) <= 1e-9 * norm(r.values()));
}

TEST_CASE("idft2 of a DC spike is the all-ones image") {
  ComplexTensor f{Tensor({4, 6}), Tensor({4, 6})};
  f.re(0, 0) = 24.0;
  const ComplexTensor x = idft2(f);
  CHECK(max_abs_diff(x.re, Tensor({4, 6}, 1.0)) < 1e-12);
}

TEST_CASE("Parseval and conjugate symmetry on real inputs") {
  Rng rng(5);
  for (std::size_t n : {2, 5, 9, 16}) {
    const Tensor x = random_normal({n, n + 1}, rng);
    const ComplexTensor f = dft2(x);
    double ex = 0.0, ef = 0.0;
    for (double v : x.values()) ex += v * v;
    for (std::size_t i = 0; i < f.re.size(); ++i) ef += f.re[i] * f.re[i] + f.im[i] * f.im[i];
    ef /= static_cast<double>(x.size());
    CHECK(std::abs(ex - ef) <= 1e-9 * ex);
    const std::size_t h = n, w = n + 1;
    for (std::size_t u = 0; u < h; ++u) {
      for (std::size_t v = 0; v < w; ++v) {
        const std::size_t uu = (h - u) % h, vv = (w - v) % w;
        CHECK(std::abs(f.re(u, v) - f.re(uu, vv)) < 1e-9);
        CHECK(std::abs(f.im(u, v) + f.im(uu, vv)) < 1e-9);
      }
    }
  }
}

TEST_CASE("softmax examples") {
  const Tensor a = softmax(Tensor::vector({0, 0}), 0);
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  const Tensor b = softmax(Tensor::vector({1000, 0}), 0);
  CHECK(b.all_finite());
  CHECK(b[0] == doctest::Approx(1.0));
  CHECK(b[1] < 1e-300);
  const Tensor c = softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  CHECK(std::abs(c[0] - 1.0 / 6) < 1e-15);
  CHECK(std::abs(c[1] - 2.0 / 6) < 1e-15);
  CHECK(std::abs(c[2] - 3.0 / 6) < 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore a shift") {
  Rng rng(8);
  const Tensor x = random_normal({6, 9}, rng, 5.0);
  const Tensor y = softmax_rows(x);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (double v : y.row(i)) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  Tensor shifted = x;
  for (double& v : shifted.values()) v += 123.456;
  CHECK(max_abs_diff(softmax_rows(shifted), y) < 1e-12);

  const Tensor cols = softmax(x, 0);
  for (std::size_t j = 0; j < 9; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s += cols(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax_rows_backward matches finite differences") {
  Rng rng(9);
  const Tensor x = random_normal({3, 4}, rng);
  const Tensor g = random_normal({3, 4}, rng);
  auto f = [&](const Tensor& t) {
    const Tensor y = softmax_rows(t);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  const Tensor analytic = softmax_rows_backward(softmax_rows(x), g);
  CHECK(max_relative_error(analytic, finite_diff_gradient(f, x)) < 1e-6);
}

TEST_CASE("sigmoid and cosine") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  const std::vector<double> e1{1, 0}, e2{0, 1}, a{1, 2}, b{2, 4}, z{0, 0};
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  try {
    cosine_similarity(a, z);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateInput);
  }
}

namespace {

// Direct zero-padded 3x3 convolution, layer by layer.
Tensor conv_oracle(const Tensor& x, const ConvLayer& l) {
  const std::size_t h = x.dim(0), w = x.dim(1), ci = x.dim(2), co = l.kernel.dim(3);
  Tensor y({h, w, co});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t o = 0; o < co; ++o) {
        double acc = l.bias[o];
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w)) continue;
            for (std::size_t c = 0; c < ci; ++c) {
              const std::size_t k = ((static_cast<std::size_t>(di + 1) * 3 + static_cast<std::size_t>(dj + 1)) * ci + c) * co + o;
              acc += l.kernel[k] * x(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), c);
            }
          }
        y(i, j, o) = acc;
      }
  return y;
}

ConvStackWeights random_stack(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  ConvStackWeights w = ConvStackWeights::zeros(in, hidden, out);
  for (auto& l : w.layers) {
    l.kernel = random_normal(l.kernel.dims(), rng, 0.4);
    l.bias = random_normal(l.bias.dims(), rng, 0.1);
  }
  return w;
}

}  // namespace

TEST_CASE("conv stack against a nested-loop oracle") {
  Rng rng(21);
  const Tensor x = random_normal({5, 5, 2}, rng);
  const ConvStackWeights w = random_stack(2, 3, 4, rng);
  Tensor h = x;
  for (std::size_t l = 0; l < 3; ++l) {
    h = conv_oracle(h, w.layers[l]);
    if (l < 2) {
      for (double& v : h.values()) v = v > 0 ? v : w.negative_slope * v;
    }
  }
  const Tensor y = conv_stack_forward(x, w);
  CHECK(y.dims() == std::vector<std::size_t>{5, 5, 4});
  CHECK(max_abs_diff(y, h) < 1e-12);
  CHECK(max_abs_diff(conv3x3(x, w.layers[0]), conv_oracle(x, w.layers[0])) < 1e-12);
}

TEST_CASE("identity and zero conv stacks") {
  Rng rng(2);
  const Tensor x = random_normal({4, 6, 1}, rng);
  ConvStackWeights id = ConvStackWeights::zeros(1, 1, 1);
  id.negative_slope = 1.0;
  for (auto& l : id.layers) l.kernel[4] = 1.0;  // center tap
  CHECK(max_abs_diff(conv_stack_forward(x, id), x) == 0.0);
  const Tensor z = conv_stack_forward(x, ConvStackWeights::zeros(1, 3, 2));
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("conv stack rejects a channel mismatch") {
  const ConvStackWeights w = ConvStackWeights::zeros(3, 2, 2);
  try {
    conv_stack_forward(Tensor({4, 4, 2}), w);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
}

TEST_CASE("conv stack backward matches finite differences") {
  Rng rng(4);
  const Tensor x = random_normal({4, 5, 2}, rng);
  ConvStackWeights w = random_stack(2, 3, 2, rng);
  const Tensor g = random_normal({4, 5, 2}, rng);
  auto readout = [&](const ConvStackWeights& ws, const Tensor& in) {
    const Tensor y = conv_stack_forward(in, ws);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  ConvStackCache cache;
  conv_stack_forward(x, w, &cache);
  const ConvStackGrads grads = conv_stack_backward(cache, w, g);
  CHECK(max_relative_error(grads.input,
                           finite_diff_gradient([&](const Tensor& t) { return readout(w, t); }, x)) < 1e-4);
  for (std::size_t l = 0; l < 3; ++l) {
    auto fk = [&](const Tensor& k) {
      ConvStackWeights c = w;
      c.layers[l].kernel = k;
      return readout(c, x);
    };
    auto fb = [&](const Tensor& b) {
      ConvStackWeights c = w;
      c.layers[l].bias = b;
      return readout(c, x);
    };
    CHECK(max_relative_error(grads.layers[l].kernel, finite_diff_gradient(fk, w.layers[l].kernel)) < 1e-4);
    CHECK(max_relative_error(grads.layers[l].bias, finite_diff_gradient(fb, w.layers[l].bias)) < 1e-4);
  }
}

TEST_CASE("finite differences on simple functions") {
  const Tensor x = Tensor::vector({1, 2});
  const Tensor g = finite_diff_gradient([](const Tensor& t) { return t[0] * t[0] + t[1] * t[1]; }, x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);
  const Tensor c = finite_diff_gradient([](const Tensor&) { return 3.0; }, x);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
}

TEST_CASE("rng replays and derived streams are independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42, a.counter());
  CHECK(c.next_u64() == a.next_u64());
  const Rng root(42);
  Rng d1 = root.derive(1), d1b = root.derive(1), d2 = root.derive(2);
  CHECK(root.counter() == 0);
  const auto x = d1.next_u64();
  CHECK(x == d1b.next_u64());
  CHECK(x != d2.next_u64());
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.uniform_index(7) < 7);
  }
}

TEST_CASE("matrix helpers") {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1});
  CHECK(matmul(a, b) == Tensor::matrix(2, 2, {4, 5, 10, 11}));
  CHECK(matmul_nt(a, transpose(b)) == matmul(a, b));
  CHECK(matmul_tn(transpose(a), b) == matmul(a, b));
  CHECK(vstack(a, a).rows() == 4);
  CHECK(mean_rows(a) == Tensor::vector({2.5, 3.5, 4.5}));
  CHECK(sum(hadamard(a, a)) == 91.0);
  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("tensor files round-trip bit-exactly") {
  Rng rng(6);
  const Tensor t = random_normal({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "A2SI");
  CHECK(bytes.size() == 4 + 4 + 4 + 3 * 4 + 24 * 8);
  CHECK(read_tensor(ss) == t);

  const ComplexTensor c{t, t * 2.0};
  std::stringstream cs;
  write_complex_tensor(cs, c);
  const ComplexTensor back = read_complex_tensor(cs);
  CHECK(back.re == c.re);
  CHECK(back.im == c.im);

  std::stringstream bad("B2SI....");
  CHECK_THROWS_AS(read_tensor(bad), Error);
}
