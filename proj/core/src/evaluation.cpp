#include "tsforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "io_util.hpp"

namespace tsforge {

std::vector<double> extract_features(std::span<const double> seq, std::size_t channels,
                                     std::size_t timesteps) {
  if (channels == 0 || timesteps == 0 || seq.size() != channels * timesteps) {
    throw MetricError("extract_features: sequence span does not match (channels, timesteps)");
  }
  std::vector<double> features;
  features.reserve(channels * kFeaturesPerChannel);
  std::vector<double> sorted(timesteps);
  double w = static_cast<double>(timesteps);
  for (std::size_t c = 0; c < channels; ++c) {
    std::span<const double> ch = seq.subspan(c * timesteps, timesteps);
    std::copy(ch.begin(), ch.end(), sorted.begin());
    std::sort(sorted.begin(), sorted.end());

    double median = timesteps % 2 == 1
                        ? sorted[timesteps / 2]
                        : 0.5 * (sorted[timesteps / 2 - 1] + sorted[timesteps / 2]);
    double sum = std::accumulate(ch.begin(), ch.end(), 0.0);
    double mean = sum / w;
    double sq_sum = 0.0;
    double var = 0.0;
    for (double v : ch) {
      sq_sum += v * v;
      var += (v - mean) * (v - mean);
    }
    var /= w;  // population statistics
    double stddev = std::sqrt(var);
    double rms = std::sqrt(sq_sum / w);

    features.push_back(median);
    features.push_back(mean);
    features.push_back(stddev);
    features.push_back(var);
    features.push_back(rms);
    features.push_back(sorted.back());   // max
    features.push_back(sorted.front());  // min
  }
  return features;
}

Matrix extract_feature_matrix(const SequenceBatch& batch) {
  std::size_t n = batch.size(), c = batch.channels(), w = batch.timesteps();
  Matrix m = Matrix::zeros(n, c * kFeaturesPerChannel);
  const double* data = batch.data.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f =
        extract_features(std::span<const double>(data + i * c * w, c * w), c, w);
    std::copy(f.begin(), f.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  }
  return m;
}

namespace {

// Mean of the row-normalized rows. Throws when a row has zero norm.
std::vector<double> mean_normalized_rows(const Matrix& m, const char* which) {
  std::vector<double> acc(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::span<const double> row = m.row(r);
    double norm_sq = 0.0;
    for (double v : row) norm_sq += v * v;
    if (norm_sq == 0.0) {
      throw MetricError(std::string(which) + " sample " + std::to_string(r) +
                        " has a zero-norm feature vector");
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t c = 0; c < m.cols; ++c) acc[c] += row[c] * inv;
  }
  for (double& v : acc) v /= static_cast<double>(m.rows);
  return acc;
}

}  // namespace

double avg_cos_sim(const Matrix& real_features, const Matrix& syn_features) {
  if (real_features.rows == 0 || syn_features.rows == 0) {
    throw MetricError("avg_cos_sim: feature matrices must be non-empty");
  }
  if (real_features.cols != syn_features.cols) {
    throw MetricError("avg_cos_sim: feature dimensions differ, " +
                      std::to_string(real_features.cols) + " vs " +
                      std::to_string(syn_features.cols));
  }
  // The all-pairs mean factorizes: mean_ab cos(a, b) = <mean_a a_hat, mean_b b_hat>.
  std::vector<double> r = mean_normalized_rows(real_features, "real");
  std::vector<double> s = mean_normalized_rows(syn_features, "synthetic");
  double dot = 0.0;
  for (std::size_t c = 0; c < r.size(); ++c) dot += r[c] * s[c];
  return dot;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw MetricError("kl_divergence: length mismatch, " + std::to_string(p.size()) + " vs " +
                      std::to_string(q.size()));
  }
  double sum_p = std::accumulate(p.begin(), p.end(), 0.0);
  double sum_q = std::accumulate(q.begin(), q.end(), 0.0);
  if (std::abs(sum_p - 1.0) > 1e-6 || std::abs(sum_q - 1.0) > 1e-6) {
    throw MetricError("kl_divergence: inputs must be probability vectors (sums " +
                      ioutil::format_double(sum_p) + ", " + ioutil::format_double(sum_q) + ")");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 * log(0/q) = 0
    if (q[i] <= 0.0) {
      throw MetricError("kl_divergence: q must be strictly positive where p is (index " +
                        std::to_string(i) + ")");
    }
    d += p[i] * std::log2(p[i] / q[i]);
  }
  return d;
}

double jensen_shannon_distance(std::span<const double> p, std::span<const double> q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  double sq = 0.5 * (kl_divergence(p, m) + kl_divergence(q, m));
  return std::sqrt(std::max(0.0, sq));
}

namespace {

std::vector<double> smoothed_histogram(std::span<const double> values, double lo, double hi,
                                       std::size_t bins, double smoothing) {
  std::vector<double> h(bins, smoothing);
  double range = hi - lo;
  for (double v : values) {
    std::size_t idx = 0;
    if (range > 0.0) {
      idx = static_cast<std::size_t>((v - lo) / range * static_cast<double>(bins));
      if (idx >= bins) idx = bins - 1;  // v == hi lands in the last bin
    }
    h[idx] += 1.0;
  }
  double total = static_cast<double>(values.size()) + smoothing * static_cast<double>(bins);
  for (double& x : h) x /= total;
  return h;
}

}  // namespace

JsBreakdown avg_jen_dis(const Matrix& real_features, const Matrix& syn_features,
                        const JsOptions& opts) {
  if (real_features.rows == 0 || syn_features.rows == 0) {
    throw MetricError("avg_jen_dis: feature matrices must be non-empty");
  }
  if (real_features.cols != syn_features.cols) {
    throw MetricError("avg_jen_dis: feature dimensions differ, " +
                      std::to_string(real_features.cols) + " vs " +
                      std::to_string(syn_features.cols));
  }
  if (opts.bins == 0) throw ParameterError("avg_jen_dis: bins must be >= 1");

  JsBreakdown out;
  out.per_feature.reserve(real_features.cols);
  std::vector<double> rv(real_features.rows), sv(syn_features.rows);
  for (std::size_t f = 0; f < real_features.cols; ++f) {
    for (std::size_t r = 0; r < real_features.rows; ++r) rv[r] = real_features.at(r, f);
    for (std::size_t r = 0; r < syn_features.rows; ++r) sv[r] = syn_features.at(r, f);
    double lo = *std::min_element(rv.begin(), rv.end());
    double hi = *std::max_element(rv.begin(), rv.end());
    lo = std::min(lo, *std::min_element(sv.begin(), sv.end()));
    hi = std::max(hi, *std::max_element(sv.begin(), sv.end()));
    std::vector<double> p = smoothed_histogram(rv, lo, hi, opts.bins, opts.smoothing);
    std::vector<double> q = smoothed_histogram(sv, lo, hi, opts.bins, opts.smoothing);
    out.per_feature.push_back(jensen_shannon_distance(p, q));
  }
  double sum = std::accumulate(out.per_feature.begin(), out.per_feature.end(), 0.0);
  out.value = opts.sum_instead_of_mean
                  ? sum
                  : sum / static_cast<double>(out.per_feature.size());
  return out;
}

// ---- PCA -------------------------------------------------------------------

EigenDecomposition jacobi_eigendecomposition(const Matrix& symmetric) {
  std::size_t n = symmetric.rows;
  if (n == 0 || symmetric.cols != n) {
    throw MetricError("jacobi: matrix must be square and non-empty");
  }
  double scale = 0.0;
  for (double v : symmetric.values) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(symmetric.at(i, j) - symmetric.at(j, i)) > 1e-9 * std::max(1.0, scale)) {
        throw MetricError("jacobi: matrix is not symmetric at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
      }
    }
  }

  Matrix a = symmetric;
  // Work on the exact symmetrization so rounding asymmetry cannot drift.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = 0.5 * (a.at(i, j) + a.at(j, i));
      a.at(i, j) = v;
      a.at(j, i) = v;
    }
  }
  Matrix vec = Matrix::zeros(n, n);  // rows accumulate the eigenvectors
  for (std::size_t i = 0; i < n; ++i) vec.at(i, i) = 1.0;

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a.at(p, q));
    }
    if (off == 0.0 || off < 1e-15 * std::max(1.0, scale)) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a.at(p, q);
        if (apq == 0.0) continue;
        double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        double tau = s / (1.0 + c);
        double h = t * apq;

        a.at(p, p) -= h;
        a.at(q, q) += h;
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == p || j == q) continue;
          double ajp = a.at(j, p);
          double ajq = a.at(j, q);
          a.at(j, p) = ajp - s * (ajq + ajp * tau);
          a.at(j, q) = ajq + s * (ajp - ajq * tau);
          a.at(p, j) = a.at(j, p);
          a.at(q, j) = a.at(j, q);
        }
        for (std::size_t j = 0; j < n; ++j) {
          double vp = vec.at(p, j);
          double vq = vec.at(q, j);
          vec.at(p, j) = vp - s * (vq + vp * tau);
          vec.at(q, j) = vq + s * (vp - vq * tau);
        }
      }
    }
  }

  // Sort eigenpairs by descending eigenvalue; make each vector's largest
  // component positive so output is deterministic up to ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a.at(i, i) > a.at(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a.at(order[i], order[i]);
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double v = std::abs(vec.at(order[i], j));
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    double sign = vec.at(order[i], arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) out.vectors.at(i, j) = sign * vec.at(order[i], j);
  }
  return out;
}

PcaResult pca_project(const Matrix& rows, std::size_t k) {
  std::size_t n = rows.rows, d = rows.cols;
  if (n < 2) throw MetricError("pca: need at least 2 rows, got " + std::to_string(n));
  if (k == 0 || k > d) {
    throw ParameterError("pca: k must lie in [1, " + std::to_string(d) + "]");
  }

  Matrix centered = rows;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += rows.at(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered.at(r, c) -= mean;
  }

  Matrix cov = Matrix::zeros(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = centered.values.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      double vi = row[i];
      if (vi == 0.0) continue;
      double* crow = cov.values.data() + i * d;
      for (std::size_t j = i; j < d; ++j) crow[j] += vi * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double v = cov.at(i, j) / static_cast<double>(n);
      cov.at(i, j) = v;
      cov.at(j, i) = v;
    }
  }

  EigenDecomposition eig = jacobi_eigendecomposition(cov);

  PcaResult out;
  out.explained_variance.assign(eig.values.begin(),
                                eig.values.begin() + static_cast<std::ptrdiff_t>(k));
  out.components = Matrix::zeros(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.components.at(i, j) = eig.vectors.at(i, j);
  }
  out.projections = Matrix::zeros(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += centered.at(r, j) * out.components.at(i, j);
      out.projections.at(r, i) = dot;
    }
  }
  return out;
}

// ---- report & plot data -----------------------------------------------------

SimilarityReport compare_batches(const SequenceBatch& real, const SequenceBatch& syn,
                                 const JsOptions& opts) {
  if (real.channels() != syn.channels() || real.timesteps() != syn.timesteps()) {
    throw DataError("real sequences are (" + std::to_string(real.channels()) + ", " +
                    std::to_string(real.timesteps()) + ") but synthetic are (" +
                    std::to_string(syn.channels()) + ", " + std::to_string(syn.timesteps()) +
                    ")");
  }
  Matrix rf = extract_feature_matrix(real);
  Matrix sf = extract_feature_matrix(syn);
  JsBreakdown js = avg_jen_dis(rf, sf, opts);

  SimilarityReport report;
  report.avg_cos_sim = avg_cos_sim(rf, sf);
  report.avg_jen_dis = js.value;
  report.n_real = real.size();
  report.n_syn = syn.size();
  report.per_feature_js = std::move(js.per_feature);
  return report;
}

std::string report_to_json(const SimilarityReport& report) {
  nlohmann::json j;
  j["avg_cos_sim"] = report.avg_cos_sim;
  j["avg_jen_dis"] = report.avg_jen_dis;
  j["n_real"] = report.n_real;
  j["n_syn"] = report.n_syn;
  j["per_feature_js"] = report.per_feature_js;
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const SimilarityReport& report) {
  ioutil::write_file(path, report_to_json(report));
}

Matrix flatten_batch(const SequenceBatch& batch) {
  std::size_t n = batch.size();
  std::size_t d = batch.channels() * batch.timesteps();
  Matrix m;
  m.rows = n;
  m.cols = d;
  m.values.assign(batch.data.values().begin(), batch.data.values().end());
  return m;
}

void write_pca_csv(const std::filesystem::path& path, const SequenceBatch& real,
                   const SequenceBatch& syn) {
  if (real.channels() != syn.channels() || real.timesteps() != syn.timesteps()) {
    throw DataError("pca plot data: real and synthetic batches have different (C, W)");
  }
  Matrix rf = flatten_batch(real);
  Matrix sf = flatten_batch(syn);
  Matrix stacked = Matrix::zeros(rf.rows + sf.rows, rf.cols);
  std::copy(rf.values.begin(), rf.values.end(), stacked.values.begin());
  std::copy(sf.values.begin(), sf.values.end(),
            stacked.values.begin() + static_cast<std::ptrdiff_t>(rf.values.size()));

  PcaResult pca = pca_project(stacked, 2);

  std::string out = "sample_id,origin,pc1,pc2\n";
  for (std::size_t r = 0; r < stacked.rows; ++r) {
    bool is_real = r < rf.rows;
    out += std::to_string(is_real ? r : r - rf.rows);
    out += ',';
    out += is_real ? "real" : "syn";
    out += ',';
    out += ioutil::format_double(pca.projections.at(r, 0));
    out += ',';
    out += ioutil::format_double(pca.projections.at(r, 1));
    out += '\n';
  }
  ioutil::write_file(path, out);
}

}  // namespace tsforge
