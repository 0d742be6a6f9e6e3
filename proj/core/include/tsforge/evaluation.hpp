#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsforge/data.hpp"

namespace tsforge {

// Dense row-major matrix for the metric pipeline (feature matrices, PCA).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  static Matrix zeros(std::size_t rows, std::size_t cols) {
    return Matrix{rows, cols, std::vector<double>(rows * cols, 0.0)};
  }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
};

inline constexpr std::size_t kFeaturesPerChannel = 7;

// Per channel over the W timesteps, in order: median, mean, standard
// deviation, variance, root mean square, maximum, minimum (population
// statistics). Channels concatenate channel-major into a 7*C vector.
std::vector<double> extract_features(std::span<const double> seq, std::size_t channels,
                                     std::size_t timesteps);

// One feature row per sequence.
Matrix extract_feature_matrix(const SequenceBatch& batch);

// Mean cosine similarity over all (real, synthetic) row pairs, computed via
// the closed form <mean of normalized real rows, mean of normalized
// synthetic rows> so the cost is linear in the number of rows.
double avg_cos_sim(const Matrix& real_features, const Matrix& syn_features);

struct JsOptions {
  std::size_t bins = 50;
  double smoothing = 1e-10;
  // The score is the mean over features. `sum_instead_of_mean` switches to a
  // plain sum for strict-formula comparisons.
  bool sum_instead_of_mean = false;
};

struct JsBreakdown {
  double value = 0.0;
  std::vector<double> per_feature;  // one Jensen-Shannon distance per feature column
};

// Per feature column: histogram real and synthetic values over their joint
// range, smooth, normalize, and take the Jensen-Shannon distance with base-2
// logarithms (bounded by 1). The score aggregates over the 7*C features.
JsBreakdown avg_jen_dis(const Matrix& real_features, const Matrix& syn_features,
                        const JsOptions& opts = {});

// Sum p_i * log2(p_i / q_i) with 0 * log(0/q) = 0. Inputs must be probability
// vectors (sums within 1e-6 of 1) of equal length.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Jensen-Shannon distance between two probability vectors, base-2 logs.
double jensen_shannon_distance(std::span<const double> p, std::span<const double> q);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues descend; eigenvectors are the rows of `vectors`, orthonormal.
struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;
};
EigenDecomposition jacobi_eigendecomposition(const Matrix& symmetric);

struct PcaResult {
  Matrix projections;                      // n x k
  Matrix components;                       // k x d, orthonormal rows
  std::vector<double> explained_variance;  // k, non-increasing
};

// Centers the columns of `rows`, eigendecomposes the covariance, projects
// onto the top-k components.
PcaResult pca_project(const Matrix& rows, std::size_t k = 2);

struct SimilarityReport {
  double avg_cos_sim = 0.0;
  double avg_jen_dis = 0.0;
  std::size_t n_real = 0;
  std::size_t n_syn = 0;
  std::vector<double> per_feature_js;
};

SimilarityReport compare_batches(const SequenceBatch& real, const SequenceBatch& syn,
                                 const JsOptions& opts = {});

std::string report_to_json(const SimilarityReport& report);
void write_report_json(const std::filesystem::path& path, const SimilarityReport& report);

// Flattens both batches to (n, C*W) rows, fits a single 2-component PCA on
// the union, and writes `sample_id,origin{real|syn},pc1,pc2` rows.
void write_pca_csv(const std::filesystem::path& path, const SequenceBatch& real,
                   const SequenceBatch& syn);

// Flattened (n, C*W) view of a batch, one row per sequence.
Matrix flatten_batch(const SequenceBatch& batch);

}  // namespace tsforge
