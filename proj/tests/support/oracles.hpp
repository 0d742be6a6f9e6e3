#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

// Independent reference computations the tests check the library against.
// Everything here is deliberately written the slow, obvious way.
namespace testsupport {

// erf via its Maclaurin series in long double; converges quickly for the
// |x| <= 3 range the tests use.
inline long double erf_series(long double x) {
  const long double two_over_sqrt_pi = 1.1283791670955125738961589031215L;
  long double x2 = x * x;
  long double num = x;  // (-1)^n x^(2n+1) / n!
  long double sum = 0.0L;
  for (int n = 0; n < 300; ++n) {
    long double term = num / static_cast<long double>(2 * n + 1);
    sum += term;
    if (std::abs(static_cast<double>(term)) < 1e-24) break;
    num *= -x2 / static_cast<long double>(n + 1);
  }
  return two_over_sqrt_pi * sum;
}

inline long double gauss_cdf_series(long double x) {
  return 0.5L * (1.0L + erf_series(x / 1.4142135623730950488016887242097L));
}

// Plain triple loop, ijk order.
inline std::vector<double> matmul_loops(std::span<const double> a, std::span<const double> b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

// The seven signal statistics recomputed straightforwardly in long double.
struct ChannelStats {
  double median, mean, stddev, variance, rms, max, min;
};

inline ChannelStats naive_channel_stats(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = x.size();
  long double sum = 0.0L, sum_sq = 0.0L;
  for (double v : x) {
    sum += v;
    sum_sq += static_cast<long double>(v) * v;
  }
  long double mean = sum / static_cast<long double>(n);
  long double var = 0.0L;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<long double>(n);
  ChannelStats s;
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.mean = static_cast<double>(mean);
  s.variance = static_cast<double>(var);
  s.stddev = static_cast<double>(std::sqrt(var));
  s.rms = static_cast<double>(std::sqrt(sum_sq / static_cast<long double>(n)));
  s.max = sorted.back();
  s.min = sorted.front();
  return s;
}

// KL divergence in long double with base-2 logs.
inline long double kl_longdouble(std::span<const double> p, std::span<const double> q) {
  long double d = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    d += static_cast<long double>(p[i]) *
         (std::log(static_cast<long double>(p[i]) / static_cast<long double>(q[i])) /
          0.69314718055994530941723212145818L);
  }
  return d;
}

inline long double js_distance_longdouble(std::span<const double> p, std::span<const double> q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  long double sq = 0.5L * (kl_longdouble(p, m) + kl_longdouble(q, m));
  return std::sqrt(std::max(0.0L, sq));
}

// All-pairs cosine similarity, the O(n^2) way.
inline double avg_cos_sim_pairs(std::span<const double> real, std::size_t n_real,
                                std::span<const double> syn, std::size_t n_syn,
                                std::size_t dim) {
  long double total = 0.0L;
  for (std::size_t a = 0; a < n_real; ++a) {
    for (std::size_t b = 0; b < n_syn; ++b) {
      long double dot = 0.0L, na = 0.0L, nb = 0.0L;
      for (std::size_t i = 0; i < dim; ++i) {
        double va = real[a * dim + i];
        double vb = syn[b * dim + i];
        dot += static_cast<long double>(va) * vb;
        na += static_cast<long double>(va) * va;
        nb += static_cast<long double>(vb) * vb;
      }
      total += dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  return static_cast<double>(total / (static_cast<long double>(n_real) * n_syn));
}

// Multi-head attention recomputed head by head with explicit loops.
// tokens: (T, M) for one sequence; weights are (M, M) with (M) biases.
inline std::vector<double> attention_loops(std::span<const double> tokens, std::size_t t,
                                           std::size_t m, std::size_t heads,
                                           std::span<const double> wq, std::span<const double> bq,
                                           std::span<const double> wk, std::span<const double> bk,
                                           std::span<const double> wv, std::span<const double> bv,
                                           std::span<const double> wo,
                                           std::span<const double> bo) {
  std::size_t d = m / heads;
  auto project = [&](std::span<const double> w, std::span<const double> bias) {
    std::vector<double> out(t * m);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = bias[j];
        for (std::size_t kk = 0; kk < m; ++kk) acc += tokens[i * m + kk] * w[kk * m + j];
        out[i * m + j] = acc;
      }
    }
    return out;
  };
  std::vector<double> q = project(wq, bq), k = project(wk, bk), v = project(wv, bv);

  std::vector<double> merged(t * m, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      // scores for query token i against all keys, head h
      std::vector<double> scores(t);
      for (std::size_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) {
          acc += q[i * m + h * d + e] * k[j * m + h * d + e];
        }
        scores[j] = acc / std::sqrt(static_cast<double>(d));
      }
      double mx = *std::max_element(scores.begin(), scores.end());
      double denom = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        denom += s;
      }
      for (double& s : scores) s /= denom;
      for (std::size_t e = 0; e < d; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t; ++j) acc += scores[j] * v[j * m + h * d + e];
        merged[i * m + h * d + e] = acc;
      }
    }
  }

  std::vector<double> out(t * m);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = bo[j];
      for (std::size_t kk = 0; kk < m; ++kk) acc += merged[i * m + kk] * wo[kk * m + j];
      out[i * m + j] = acc;
    }
  }
  return out;
}

}  // namespace testsupport
