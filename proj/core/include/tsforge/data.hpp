#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsforge/tensor.hpp"

namespace tsforge {

// A batch of multi-channel time-series, shaped (B, C, 1, W). All sequences
// in a batch share (C, W). Labels, when present, carry one class id per
// sequence.
struct SequenceBatch {
  Tensor data;
  std::vector<int> labels;
  std::string source;  // "simulated" or the originating file path

  std::size_t size() const { return data.defined() ? data.dim(0) : 0; }
  std::size_t channels() const { return data.dim(1); }
  std::size_t timesteps() const { return data.dim(3); }
};

struct DatasetSpec {
  enum class Kind { kSinusoid, kCsv };

  Kind kind = Kind::kSinusoid;
  std::string path;  // csv only
  std::size_t n_samples = 10000;
  std::size_t seq_len = 24;
  std::size_t channels = 5;
  std::optional<int> class_filter;
  std::optional<std::pair<std::size_t, std::size_t>> window;  // [start, end)
  bool normalize = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// The (A, B) pair behind every simulated channel, sample-major, so that a
// sequence can be re-derived from the log alone.
struct SinusoidParams {
  std::size_t channels = 0;
  std::vector<double> a;  // size n * channels
  std::vector<double> b;
};

// Writes x_i(t) = sin(A_i * t + B_i), t = 0..seq_len-1 for each channel.
// a/b hold one coefficient pair per channel; out is (channels * seq_len).
void sinusoid_sequence(std::span<const double> a, std::span<const double> b,
                       std::size_t seq_len, std::span<double> out);

// n sequences of C channels with per-channel A, B ~ U(0, 0.1).
SequenceBatch simulate_sinusoids(std::size_t n, std::size_t seq_len, std::size_t channels,
                                 Rng& rng, SinusoidParams* params_out = nullptr);

// Long-form CSV with header `sample_id,label,channel,t,value`. Loading
// validates a dense (C, W) grid per sample and reports offending row numbers;
// nothing is silently padded or truncated.
SequenceBatch load_csv(const std::filesystem::path& path);
void save_csv(const std::filesystem::path& path, const SequenceBatch& batch);

// Parameter log CSV with header `sample_id,channel,A,B`.
void save_sinusoid_params(const std::filesystem::path& path, const SinusoidParams& params);

// Rescales each channel to mean 0, variance 1 over all samples and timesteps
// jointly. A zero-variance channel is a DataError naming the channel.
SequenceBatch normalize_channelwise(const SequenceBatch& batch);

// Keeps timesteps [start, end).
SequenceBatch slice_window(const SequenceBatch& batch, std::size_t start, std::size_t end);

SequenceBatch filter_by_label(const SequenceBatch& batch, int label);

SequenceBatch gather(const SequenceBatch& batch, std::span<const std::size_t> indices);

// One epoch of batch index lists: a single shuffle of 0..n-1, chunked into
// full batches, partial tail dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng);

// Full ingestion pipeline: simulate or load, then filter -> window -> normalize.
SequenceBatch load_dataset(const DatasetSpec& spec);

}  // namespace tsforge
