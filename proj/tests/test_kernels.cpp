#include <doctest.h>

#include <cmath>
#include <vector>

#include "charparse/kernels.hpp"
#include "charparse/rng.hpp"

using namespace charparse;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Forces the parallel code path regardless of problem size.
struct ThresholdGuard {
  std::size_t saved = kernels::parallel_threshold();
  explicit ThresholdGuard(std::size_t t) { kernels::set_parallel_threshold(t); }
  ~ThresholdGuard() { kernels::set_parallel_threshold(saved); }
};

}  // namespace

TEST_CASE("gemm matches the serial reference for all transpositions") {
  for (std::size_t threshold : {std::size_t{0}, std::size_t{1} << 40}) {
    ThresholdGuard guard(threshold);
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        const std::size_t m = 7, n = 5, k = 9;
        const auto a = random_vector(m * k, 1), b = random_vector(k * n, 2);
        const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
        for (bool acc : {false, true}) {
          auto c = random_vector(m * n, 3), ref = c;
          kernels::gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c.data(), n, acc);
          kernels::gemm_reference(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, ref.data(), n, acc);
          for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("gemm is identical across thread counts") {
  const std::size_t m = 33, n = 17, k = 65;
  const auto a = random_vector(m * k, 4), b = random_vector(k * n, 5);
  std::vector<double> serial(m * n), parallel(m * n);
  {
    ThresholdGuard guard(std::size_t{1} << 40);
    kernels::gemm(false, false, m, n, k, a.data(), k, b.data(), n, serial.data(), n, false);
  }
  {
    ThresholdGuard guard(0);
    kernels::gemm(false, false, m, n, k, a.data(), k, b.data(), n, parallel.data(), n, false);
  }
  CHECK(serial == parallel);
}

TEST_CASE("conv1d matches the direct convolution") {
  ThresholdGuard guard(0);
  for (std::size_t width : {1, 2, 3, 5}) {
    const std::size_t batch = 3, len = 7, ch = 4, filters = 6;
    const auto x = random_vector(batch * len * ch, 6), w = random_vector(width * ch * filters, 7);
    const std::size_t out_len = len - width + 1;
    std::vector<double> out(batch * out_len * filters), ref(out.size());
    kernels::conv1d(batch, len, ch, width, filters, x.data(), w.data(), out.data());
    kernels::conv1d_reference(batch, len, ch, width, filters, x.data(), w.data(), ref.data());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows match the reference and sum to one") {
  ThresholdGuard guard(0);
  const std::size_t rows = 9, cols = 13;
  auto x = random_vector(rows * cols, 8);
  x[3] = -std::numeric_limits<double>::infinity();
  std::vector<double> y(x.size()), ref(x.size());
  kernels::softmax_rows(rows, cols, x.data(), y.data());
  kernels::softmax_rows_reference(rows, cols, x.data(), ref.data());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      CHECK(y[r * cols + c] == doctest::Approx(ref[r * cols + c]).epsilon(1e-14));
      s += y[r * cols + c];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(y[3] == 0.0);
}
