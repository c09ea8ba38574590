#include <cmath>
#include <numeric>
#include <cstring>
#include <sstream>

#include "convtrans/errors.hpp"
#include "convtrans/gradcheck.hpp"
#include "convtrans/ops.hpp"
#include "convtrans/parallel.hpp"
#include "convtrans/tensor_io.hpp"
#include "doctest.h"

using namespace cts;

namespace {

Tensor<double> random_tensor(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void fill_uniform(Tensor<double>& t, RngState& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

// Direct nested-loop cross-correlation with zero padding.
std::vector<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& b, std::size_t pad) {
  std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  std::size_t co = w.dim(0), k = w.dim(2);
  std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
  std::vector<double> out(n * co * oh * ow);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                long iy = static_cast<long>(y + ky) - static_cast<long>(pad);
                long ix = static_cast<long>(xx + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += x[((s * ci + c) * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] *
                       w[((o * ci + c) * k + ky) * k + kx];
              }
          out[((s * co + o) * oh + y) * ow + xx] = acc;
        }
  return out;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("rng streams are reproducible") {
  RngState a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  RngState u(5);
  for (int i = 0; i < 1000; ++i) {
    double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    REQUIRE(u.below(7) < 7);
  }
}

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ConfigError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), ConfigError);
}

TEST_CASE("conv2d identity kernel and zero input") {
  Tensor<double> x = Tensor<double>::ones({1, 1, 3, 3});
  Tensor<double> w({1, 1, 1, 1}, 1.0);
  Tensor<double> b = Tensor<double>::zeros({1});
  auto y = conv2d(x, w, b, 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (auto v : y.data()) CHECK(v == 1.0);

  Tensor<double> zero = Tensor<double>::zeros({2, 3, 4, 5});
  Tensor<double> w3({2, 3, 3, 3}, 0.7);
  Tensor<double> b2({2}, std::vector<double>{1.5, -2.0});
  auto z = conv2d(zero, w3, b2, 1);
  CHECK(z.shape() == Shape{2, 2, 4, 5});
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == ((i / 20) % 2 == 0 ? 1.5 : -2.0));
}

TEST_CASE("conv2d 3x3 all-ones on 2x2 matches direct summation") {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> w = Tensor<double>::ones({1, 1, 3, 3});
  Tensor<double> b = Tensor<double>::zeros({1});
  auto y = conv2d(x, w, b, 1);
  auto expect = conv_oracle(x, w, b, 1);
  REQUIRE(expect == std::vector<double>{10, 10, 10, 10});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == expect[i]);
}

TEST_CASE("conv2d random instances match the nested-loop oracle") {
  RngState rng(3);
  for (std::size_t k : {1u, 3u, 5u}) {
    std::size_t pad = k / 2;
    auto x = random_tensor({2, 3, 6, 5}, rng);
    auto w = random_tensor({4, 3, k, k}, rng);
    auto b = random_tensor({4}, rng);
    auto y = conv2d(x, w, b, pad);
    auto expect = conv_oracle(x, w, b, pad);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  auto x = random_tensor({1, 2, 5, 5}, rng);
  auto w = random_tensor({1, 2, 3, 3}, rng);
  auto y = conv2d(x, w, random_tensor({1}, rng), 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
}

TEST_CASE("conv2d channel mismatch names both shapes") {
  Tensor<float> x({1, 3, 4, 4});
  Tensor<float> w({2, 4, 3, 3});
  Tensor<float> b({2});
  try {
    conv2d(x, w, b, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1,3,4,4]") != std::string::npos);
    CHECK(msg.find("[2,4,3,3]") != std::string::npos);
  }
}

TEST_CASE("max_pool2 values, ties and errors") {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(max_pool2(x).item() == 4.0);

  Tape<double> tape;
  Tensor<double> c({1, 1, 4, 4}, 2.5);
  c.set_requires_grad(true);
  {
    TapeScope<double> scope(tape);
    auto y = max_pool2(c);
    for (auto v : y.data()) CHECK(v == 2.5);
    backward(sum(y), tape);
  }
  auto g = c.grad_tensor();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 0; col < 4; ++col)
      CHECK(g[r * 4 + col] == ((r % 2 == 0 && col % 2 == 0) ? 1.0 : 0.0));

  // distinct values against an exhaustive scan
  RngState rng(11);
  std::vector<double> vals(16);
  std::iota(vals.begin(), vals.end(), 0.0);
  shuffle(vals.begin(), vals.end(), rng);
  Tensor<double> d({1, 1, 4, 4}, vals);
  auto p = max_pool2(d);
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 2; ++ox) {
      double best = -1;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, vals[(2 * oy + dy) * 4 + 2 * ox + dx]);
      CHECK(p[oy * 2 + ox] == best);
    }

  CHECK_THROWS_AS(max_pool2(Tensor<double>({1, 1, 3, 4})), ConfigError);
}

TEST_CASE("batch_norm2d training and eval semantics") {
  RngState rng(5);
  auto x = random_tensor({4, 3, 5, 5}, rng, 2.0, 7.0);
  auto gamma = Tensor<double>::ones({3});
  auto beta = Tensor<double>::zeros({3});
  auto state = BatchNormState<double>::identity(3);
  auto y = batch_norm2d(x, gamma, beta, state, true);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double m = 0, v = 0;
    std::size_t cnt = 0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 25; ++i) {
        m += y[(s * 3 + ch) * 25 + i];
        ++cnt;
      }
    m /= static_cast<double>(cnt);
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(y[(s * 3 + ch) * 25 + i] - m, 2);
    v /= static_cast<double>(cnt);
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
    // running stats moved 10% of the way from (0, 1)
    CHECK(state.running_mean[ch] > 0.1);
  }

  auto zero_gamma = Tensor<double>::zeros({3});
  Tensor<double> beta2({3}, std::vector<double>{0.5, -1.0, 2.0});
  auto s2 = BatchNormState<double>::identity(3);
  auto z = batch_norm2d(x, zero_gamma, beta2, s2, true);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == beta2[(i / 25) % 3]);

  Tensor<double> g2({3}, 2.0);
  auto ones = Tensor<double>::ones({3});
  auto s3 = BatchNormState<double>::identity(3);
  auto e = batch_norm2d(x, g2, ones, s3, false);
  for (std::size_t i = 0; i < e.numel(); ++i)
    CHECK(e[i] == doctest::Approx(2 * x[i] + 1).epsilon(1e-5));

  // zero-variance channel is handled by epsilon
  Tensor<double> constant({2, 1, 2, 2}, 3.0);
  auto s4 = BatchNormState<double>::identity(1);
  auto c = batch_norm2d(constant, Tensor<double>::ones({1}), Tensor<double>::zeros({1}), s4, true);
  for (auto v : c.data()) CHECK(v == 0.0);

  auto s5 = BatchNormState<double>::identity(1);
  CHECK_THROWS_AS(batch_norm2d(Tensor<double>({1, 1, 1, 1}), Tensor<double>::ones({1}),
                               Tensor<double>::zeros({1}), s5, true),
                  ConfigError);
}

TEST_CASE("layer_norm moments") {
  auto ones = Tensor<double>::ones({3});
  auto zeros = Tensor<double>::zeros({3});
  auto y = layer_norm(Tensor<double>({1, 3}, 1.0), ones, zeros);
  for (auto v : y.data()) CHECK(v == 0.0);

  auto y2 = layer_norm(Tensor<double>({2}, std::vector<double>{1, -1}), Tensor<double>::ones({2}),
                       Tensor<double>::zeros({2}));
  CHECK(y2[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y2[1] == doctest::Approx(-1.0).epsilon(1e-5));

  RngState rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 16}, rng, -3.0, 5.0);
    auto z = layer_norm(x, Tensor<double>::ones({16}), Tensor<double>::zeros({16}));
    for (std::size_t r = 0; r < 4; ++r) {
      double m = 0, v = 0;
      for (std::size_t j = 0; j < 16; ++j) m += z[r * 16 + j];
      m /= 16;
      for (std::size_t j = 0; j < 16; ++j) v += std::pow(z[r * 16 + j] - m, 2);
      v /= 16;
      CHECK(std::abs(m) <= 1e-6);
      CHECK(std::abs(v - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("softmax, relu, dropout") {
  auto s = softmax_lastdim(Tensor<double>({3}, 0.0));
  for (auto v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

  RngState rng(9);
  auto x = random_tensor({5, 7}, rng, -20.0, 20.0);
  auto shifted = x.clone();
  for (auto& v : shifted.data()) v += 123.25;
  auto a = softmax_lastdim(x), b = softmax_lastdim(shifted);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-7);
  for (std::size_t r = 0; r < 5; ++r) {
    double t = 0;
    for (std::size_t j = 0; j < 7; ++j) t += a[r * 7 + j];
    CHECK(std::abs(t - 1.0) <= 1e-6);
  }
  // large magnitudes stay finite
  auto big = softmax_lastdim(Tensor<double>({2}, std::vector<double>{1e4, -1e4}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == 1.0);

  auto r = relu(Tensor<double>({3}, std::vector<double>{-1, 0, 2}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);

  auto d0 = dropout(x, 0.0, true, rng);
  auto de = dropout(x, 0.5, false, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(d0[i] == x[i]);
    CHECK(de[i] == x[i]);
  }
  Tensor<double> ones = Tensor<double>::ones({10000});
  auto dd = dropout(ones, 0.25, true, rng);
  std::size_t zeros = 0;
  for (auto v : dd.data()) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.75));
  }
  CHECK(zeros > 2300);
  CHECK(zeros < 2700);
  CHECK_THROWS_AS(dropout(ones, 1.0, true, rng), ConfigError);
}

TEST_CASE("linear forward cases") {
  Tensor<double> x({1, 2}, std::vector<double>{1, 2});
  Tensor<double> w({2, 2}, std::vector<double>{1, 0, 0, 2});
  Tensor<double> b({2}, std::vector<double>{1, 1});
  auto y = linear(x, w, b);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 5.0);

  RngState rng(1);
  auto t = random_tensor({2, 3, 4}, rng);
  Tensor<double> eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto id = linear(t, eye, Tensor<double>::zeros({4}));
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(id[i] == t[i]);

  auto bias = random_tensor({3}, rng);
  auto z = linear(t, Tensor<double>::zeros({4, 3}), bias);
  CHECK(z.shape() == Shape{2, 3, 3});
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == bias[i % 3]);

  CHECK_THROWS_AS(linear(t, Tensor<double>::zeros({5, 3}), bias), ConfigError);
}

TEST_CASE("reshape and permute round trips are bit exact") {
  RngState rng(4);
  auto x = random_tensor({2, 3, 4, 5}, rng);
  auto back = reshape(reshape(x, {6, 20}), {2, 3, 4, 5});
  CHECK(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);

  std::vector<std::size_t> perm{2, 0, 3, 1}, inverse(4);
  for (std::size_t i = 0; i < 4; ++i) inverse[perm[i]] = i;
  auto p = permute(x, perm);
  CHECK(p.shape() == Shape{4, 2, 5, 3});
  // spot-check index mapping: p[a][b][c][d] = x[b][d][a][c]
  CHECK(p[((1 * 2 + 1) * 5 + 3) * 3 + 2] == x[((1 * 3 + 2) * 4 + 1) * 5 + 3]);
  auto q = permute(p, inverse);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(q[i] == x[i]);

  auto f = flatten(x, 1, 2);
  CHECK(f.shape() == Shape{2, 12, 5});
  CHECK_THROWS_AS(reshape(x, {7, 7}), ConfigError);
  CHECK_THROWS_AS(permute(x, {0, 0, 1, 2}), ConfigError);
}

TEST_CASE("backward basics and accumulation") {
  Tensor<double> x({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    loss = sum(x);
  }
  backward(loss, tape);
  for (auto g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  tape.clear();
  {
    TapeScope<double> scope(tape);
    loss = sum(mul(x, x));
  }
  backward(loss, tape);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
  backward(loss, tape);  // no reset: leaves accumulate
  CHECK(x.grad()[0] == 4.0);
  CHECK(x.grad()[2] == 12.0);

  Tensor<double> vec;
  {
    TapeScope<double> scope(tape);
    vec = mul(x, x);
  }
  CHECK_THROWS_AS(backward(vec, tape), UsageError);
  Tape<double> empty;
  CHECK_THROWS_AS(backward(loss, empty), UsageError);
}

TEST_CASE("no tape means no recording") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  auto y = relu(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradcheck: elementary ops") {
  RngState rng(21);
  GradcheckOptions opts;
  opts.tolerance = 1e-6;

  SUBCASE("linear at 1e-6") {
    auto x = random_tensor({3, 4}, rng);
    auto w = random_tensor({4, 5}, rng);
    auto b = random_tensor({5}, rng);
    auto r = gradcheck({{"x", x}, {"w", w}, {"b", b}}, [&] { return linear(x, w, b); }, opts);
    CHECK(r.passed);
    CHECK(r.max_error <= 1e-6);
  }
  SUBCASE("conv2d 3x3 pad 1 at 1e-5") {
    opts.tolerance = 1e-5;
    auto x = random_tensor({2, 2, 5, 4}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    auto r = gradcheck({{"x", x}, {"w", w}, {"b", b}}, [&] { return conv2d(x, w, b, 1); }, opts);
    CHECK(r.passed);
  }
  SUBCASE("conv2d 1x1") {
    auto x = random_tensor({2, 3, 3, 3}, rng);
    auto w = random_tensor({2, 3, 1, 1}, rng);
    auto b = random_tensor({2}, rng);
    CHECK(gradcheck({{"x", x}, {"w", w}, {"b", b}}, [&] { return conv2d(x, w, b, 0); }, opts).passed);
  }
  SUBCASE("softmax, layer_norm, matmul, permute, add") {
    opts.tolerance = 1e-5;
    auto x = random_tensor({2, 3, 4}, rng);
    auto g = random_tensor({4}, rng);
    auto b = random_tensor({4}, rng);
    CHECK(gradcheck({{"x", x}}, [&] { return softmax_lastdim(x); }, opts).passed);
    CHECK(gradcheck({{"x", x}, {"g", g}, {"b", b}}, [&] { return layer_norm(x, g, b); }, opts).passed);
    auto y = random_tensor({2, 5, 4}, rng);
    CHECK(gradcheck({{"x", x}, {"y", y}}, [&] { return matmul(x, y, true); }, opts).passed);
    auto z = random_tensor({2, 4, 3}, rng);
    CHECK(gradcheck({{"x", x}, {"z", z}}, [&] { return matmul(x, z); }, opts).passed);
    CHECK(gradcheck({{"x", x}}, [&] { return permute(x, {2, 0, 1}); }, opts).passed);
    auto bias = random_tensor({3, 4}, rng);
    CHECK(gradcheck({{"x", x}, {"bias", bias}}, [&] { return add(x, bias); }, opts).passed);
    CHECK(gradcheck({{"x", x}}, [&] { return scale(sub(x, mul(x, x)), 0.5); }, opts).passed);
  }
  SUBCASE("batch norm in both modes") {
    opts.tolerance = 1e-5;
    auto x = random_tensor({2, 3, 3, 2}, rng);
    auto g = random_tensor({3}, rng, 0.5, 1.5);
    auto b = random_tensor({3}, rng);
    auto st = BatchNormState<double>::identity(3);
    CHECK(gradcheck({{"x", x}, {"g", g}, {"b", b}},
                    [&] { return batch_norm2d(x, g, b, st, true); }, opts).passed);
    CHECK(gradcheck({{"x", x}, {"g", g}, {"b", b}},
                    [&] { return batch_norm2d(x, g, b, st, false); }, opts).passed);
  }
  SUBCASE("relu and max pool away from kinks") {
    opts.tolerance = 1e-6;
    auto x = random_tensor({1, 2, 4, 4}, rng);
    auto resample = [&](std::uint64_t seed) {
      RngState r2(seed);
      fill_uniform(x, r2);
    };
    CHECK(gradcheck({{"x", x}}, [&] { return relu(x); }, opts, resample).passed);
    CHECK(gradcheck({{"x", x}}, [&] { return max_pool2(x); }, opts, resample).passed);
  }
}

TEST_CASE("gradcheck: composite conv-bn-relu-pool graph at 1e-4") {
  RngState rng(77);
  auto x = random_tensor({2, 2, 4, 4}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto g = random_tensor({3}, rng, 0.5, 1.5);
  auto beta = random_tensor({3}, rng);
  auto st = BatchNormState<double>::identity(3);
  auto fn = [&] { return max_pool2(relu(batch_norm2d(conv2d(x, w, b, 1), g, beta, st, true))); };
  auto resample = [&](std::uint64_t seed) {
    RngState r2(seed);
    fill_uniform(x, r2);
    fill_uniform(w, r2);
  };
  GradcheckOptions opts;
  auto r = gradcheck({{"x", x}, {"w", w}, {"b", b}, {"gamma", g}, {"beta", beta}}, fn, opts, resample);
  CHECK(r.passed);
  CHECK(r.max_error <= 1e-4);
}

TEST_CASE("gradcheck detects a wrong gradient") {
  // relu's analytic gradient at exactly 0 is 0; a function that is smooth
  // but whose gradient we corrupt through a detached path must fail.
  RngState rng(2);
  auto x = random_tensor({4}, rng);
  auto fn = [&] {
    // x * stop_gradient(x): analytic grad = x, numeric grad = 2x
    Tensor<double> frozen = x.clone();
    return mul(x, frozen);
  };
  auto r = gradcheck({{"x", x}}, fn, GradcheckOptions{});
  CHECK_FALSE(r.passed);
}

TEST_CASE("CTS-T1 round trip is bit exact") {
  RngState rng(10);
  Tensor<float> t({2, 3, 4});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  t[0] = -0.0f;
  t[1] = 1e-42f;  // subnormal
  std::stringstream ss;
  write_tensor(ss, t);
  CHECK(ss.str().size() == encoded_tensor_size(t.shape()));
  std::string raw = ss.str();
  CHECK(raw.substr(0, 8) == "CTSTEN01");
  CHECK(raw[8] == 0);
  CHECK(raw[9] == 3);
  CHECK(static_cast<unsigned char>(raw[10]) == 2);  // little-endian extent
  auto back = read_tensor(ss);
  REQUIRE(back.shape() == t.shape());
  CHECK(std::memcmp(back.data().data(), t.data().data(), 4 * t.numel()) == 0);

  std::stringstream bad("CTSTEN02xxxx");
  CHECK_THROWS_AS(read_tensor(bad), DataError);
  std::string truncated = raw.substr(0, raw.size() - 3);
  std::stringstream tr(truncated);
  CHECK_THROWS_AS(read_tensor(tr), DataError);
}

TEST_CASE("parallel gemm is bitwise identical to serial") {
  RngState rng(6);
  Tensor<float> a({256, 512}), b({512, 300});
  for (auto& v : a.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : b.data()) v = static_cast<float>(rng.uniform(-1, 1));
  auto serial = matmul(reshape(a, {1, 256, 512}), reshape(b, {1, 512, 300}));
  set_num_threads(4);
  auto par = matmul(reshape(a, {1, 256, 512}), reshape(b, {1, 512, 300}));
  set_num_threads(1);
  CHECK(std::memcmp(serial.data().data(), par.data().data(), 4 * serial.numel()) == 0);
}

}  // TEST_SUITE
