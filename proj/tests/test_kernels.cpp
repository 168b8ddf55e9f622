#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "physgnn/kernels.hpp"

using namespace physgnn::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = uni(rng);
  return v;
}

struct ThreadGuard {
  int saved = thread_count();
  ~ThreadGuard() { set_thread_count(saved); }
};

}  // namespace

TEST_CASE("gemm variants match a naive triple loop") {
  for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 3, 7}, {33, 17, 9}, {64, 64, 64}, {130, 40, 21}}) {
    const auto a = random_values(m * k, 1), b = random_values(k * n, 2), bt_src = random_values(n * k, 3);
    const auto at_src = random_values(k * m, 4);
    std::vector<double> c(m * n, 0.5), ref(m * n, 0.5);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
    gemm_nn_acc({a.data(), m, k}, {b.data(), k, n}, {c.data(), m, n});
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    std::fill(c.begin(), c.end(), 0.0);
    std::fill(ref.begin(), ref.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * bt_src[j * k + p];
    gemm_nt_acc({a.data(), m, k}, {bt_src.data(), n, k}, {c.data(), m, n});
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    std::fill(c.begin(), c.end(), 0.0);
    std::fill(ref.begin(), ref.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += at_src[p * m + i] * b[p * n + j];
    gemm_tn_acc({at_src.data(), k, m}, {b.data(), k, n}, {c.data(), m, n});
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference for any thread count") {
  ThreadGuard guard;
  const std::size_t m = 300, k = 48, n = 40;
  const auto a = random_values(m * k, 5), b = random_values(k * n, 6), bt = random_values(n * k, 7);
  const auto at = random_values(k * m, 8);
  std::vector<std::int64_t> offsets{0};
  std::mt19937_64 rng(9);
  for (std::size_t s = 0; s < 120; ++s) offsets.push_back(offsets.back() + static_cast<std::int64_t>(rng() % 5));
  const auto rows = static_cast<std::size_t>(offsets.back());
  const auto x = random_values(rows * n, 10);
  std::vector<std::int64_t> index(rows);
  for (auto& i : index) i = static_cast<std::int64_t>(rng() % m);

  std::vector<std::int64_t> row_ptr{0};
  std::vector<std::int32_t> col;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; c += 1 + rng() % 40) col.push_back(static_cast<std::int32_t>(c));
    row_ptr.push_back(static_cast<std::int64_t>(col.size()));
  }
  const auto val = random_values(col.size(), 11);
  const auto vec = random_values(m, 12);
  const auto big_a = random_values(5000, 13), big_b = random_values(5000, 14);

  struct Out {
    std::vector<double> nn, nt, tn, ssum, smax, gather, scatter, spmv;
    std::vector<std::int64_t> argmax;
    double dot;
  };
  auto run = [&](bool parallel) {
    Out o;
    o.nn.assign(m * n, 0.1);
    o.nt.assign(m * n, 0.2);
    o.tn.assign(m * n, 0.3);
    o.ssum.assign(120 * n, 0);
    o.smax.assign(120 * n, 0);
    o.argmax.assign(120 * n, 0);
    o.gather.assign(rows * n, 0);
    o.scatter.assign(m * n, 0);
    o.spmv.assign(m, 0);
    if (parallel) {
      gemm_nn_acc({a.data(), m, k}, {b.data(), k, n}, {o.nn.data(), m, n});
      gemm_nt_acc({a.data(), m, k}, {bt.data(), n, k}, {o.nt.data(), m, n});
      gemm_tn_acc({at.data(), k, m}, {b.data(), k, n}, {o.tn.data(), m, n});
      segment_sum({x.data(), rows, n}, offsets, {o.ssum.data(), 120, n});
      segment_max({x.data(), rows, n}, offsets, {o.smax.data(), 120, n}, o.argmax);
      gather_rows({o.nn.data(), m, n}, index, {o.gather.data(), rows, n});
      scatter_add_rows({x.data(), rows, n}, index, {o.scatter.data(), m, n});
      spmv({row_ptr, col, val}, vec, o.spmv);
      o.dot = dot(big_a, big_b);
    } else {
      serial::gemm_nn_acc({a.data(), m, k}, {b.data(), k, n}, {o.nn.data(), m, n});
      serial::gemm_nt_acc({a.data(), m, k}, {bt.data(), n, k}, {o.nt.data(), m, n});
      serial::gemm_tn_acc({at.data(), k, m}, {b.data(), k, n}, {o.tn.data(), m, n});
      serial::segment_sum({x.data(), rows, n}, offsets, {o.ssum.data(), 120, n});
      serial::segment_max({x.data(), rows, n}, offsets, {o.smax.data(), 120, n}, o.argmax);
      serial::gather_rows({o.nn.data(), m, n}, index, {o.gather.data(), rows, n});
      serial::scatter_add_rows({x.data(), rows, n}, index, {o.scatter.data(), m, n});
      serial::spmv({row_ptr, col, val}, vec, o.spmv);
      o.dot = serial::dot(big_a, big_b);
    }
    return o;
  };
  const Out ref = run(false);
  for (int threads : {1, 2, 3, 4}) {
    set_thread_count(threads);
    const Out got = run(true);
    CHECK(got.nn == ref.nn);
    CHECK(got.nt == ref.nt);
    CHECK(got.tn == ref.tn);
    CHECK(got.ssum == ref.ssum);
    CHECK(got.smax == ref.smax);
    CHECK(got.argmax == ref.argmax);
    CHECK(got.gather == ref.gather);
    CHECK(got.scatter == ref.scatter);
    CHECK(got.spmv == ref.spmv);
    CHECK(got.dot == ref.dot);
  }
}

TEST_CASE("segment reductions follow the empty-segment and tie conventions") {
  // Segment 0 has rows 0..1, segment 1 is empty, segment 2 has row 2.
  const std::vector<double> x{1, 5, 3, 5, 7, -2};
  const std::vector<std::int64_t> offsets{0, 2, 2, 3};
  std::vector<double> sum(6), mx(6);
  std::vector<std::int64_t> arg(6);
  segment_sum({x.data(), 3, 2}, offsets, {sum.data(), 3, 2});
  segment_max({x.data(), 3, 2}, offsets, {mx.data(), 3, 2}, arg);
  CHECK(sum == std::vector<double>{4, 10, 0, 0, 7, -2});
  CHECK(mx == std::vector<double>{3, 5, 0, 0, 7, -2});
  // Column 1 ties between rows 0 and 1: the lower row wins.
  CHECK(arg == std::vector<std::int64_t>{1, 0, -1, -1, 2, 2});
}

TEST_CASE("scatter_add accumulates repeated targets") {
  const std::vector<double> g{1, 2, 3, 4, 5, 6};
  const std::vector<std::int64_t> index{1, 0, 1};
  std::vector<double> out(4, 0.0);
  scatter_add_rows({g.data(), 3, 2}, index, {out.data(), 2, 2});
  CHECK(out == std::vector<double>{3, 4, 6, 8});
}
