#include "tsforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "io_util.hpp"

namespace tsforge {

namespace {

const char* kCsvHeader = "sample_id,label,channel,t,value";

}  // namespace

void DatasetSpec::validate() const {
  if (kind == Kind::kSinusoid && n_samples == 0) {
    throw DataError("dataset: n_samples must be >= 1, a simulation of 0 sequences is empty");
  }
  if (kind == Kind::kCsv && path.empty()) {
    throw ConfigError("dataset: csv kind requires a path");
  }
  if (seq_len == 0 || channels == 0) {
    throw ConfigError("dataset: seq_len and channels must be positive");
  }
  if (window && window->first >= window->second) {
    throw ConfigError("dataset: window start must be < end");
  }
}

void sinusoid_sequence(std::span<const double> a, std::span<const double> b,
                       std::size_t seq_len, std::span<double> out) {
  std::size_t channels = a.size();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      out[c * seq_len + t] = std::sin(a[c] * static_cast<double>(t) + b[c]);
    }
  }
}

SequenceBatch simulate_sinusoids(std::size_t n, std::size_t seq_len, std::size_t channels,
                                 Rng& rng, SinusoidParams* params_out) {
  if (n == 0) throw DataError("simulate_sinusoids: empty dataset (n = 0)");
  if (seq_len == 0 || channels == 0) {
    throw ParameterError("simulate_sinusoids: seq_len and channels must be >= 1");
  }

  SinusoidParams params;
  params.channels = channels;
  params.a.resize(n * channels);
  params.b.resize(n * channels);
  std::vector<double> data(n * channels * seq_len);
  for (std::size_t i = 0; i < n; ++i) {
    double* seq = data.data() + i * channels * seq_len;
    double* a = params.a.data() + i * channels;
    double* b = params.b.data() + i * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      a[c] = rng.uniform(0.0, 0.1);
      b[c] = rng.uniform(0.0, 0.1);
    }
    sinusoid_sequence(std::span<const double>(a, channels), std::span<const double>(b, channels),
                      seq_len, std::span<double>(seq, channels * seq_len));
  }

  SequenceBatch batch;
  batch.data = Tensor::from_data({n, channels, 1, seq_len}, std::move(data));
  batch.source = "simulated";
  if (params_out != nullptr) *params_out = std::move(params);
  return batch;
}

SequenceBatch load_csv(const std::filesystem::path& path) {
  std::string text = ioutil::read_file(path);
  std::vector<std::string_view> lines = ioutil::split_lines(text);
  // Tolerate a trailing blank line; anything else empty is a data error.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw DataError("'" + path.string() + "' is empty");
  if (lines[0] != kCsvHeader) {
    throw DataError("'" + path.string() + "' line 1: expected header '" +
                    std::string(kCsvHeader) + "'");
  }
  if (lines.size() == 1) throw DataError("'" + path.string() + "' has a header but no rows");

  struct Row {
    long long sample;
    long long label;
    long long channel;
    long long t;
    double value;
    std::size_t line_no;
  };

  std::vector<Row> rows;
  rows.reserve(lines.size() - 1);
  long long max_channel = -1;
  long long max_t = -1;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    std::size_t line_no = ln + 1;
    if (lines[ln].empty()) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": empty row");
    }
    auto fields = ioutil::split_fields(lines[ln]);
    if (fields.size() != 5) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    }
    auto sid = ioutil::parse_int(fields[0]);
    auto label = ioutil::parse_int(fields[1]);
    auto channel = ioutil::parse_int(fields[2]);
    auto t = ioutil::parse_int(fields[3]);
    auto value = ioutil::parse_double(fields[4]);
    if (!sid || !label || !channel || !t || !value) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                      ": non-numeric cell");
    }
    if (*channel < 0 || *t < 0) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                      ": negative channel or timestep index");
    }
    max_channel = std::max(max_channel, *channel);
    max_t = std::max(max_t, *t);
    rows.push_back({*sid, *label, *channel, *t, *value, line_no});
  }

  std::size_t channels = static_cast<std::size_t>(max_channel + 1);
  std::size_t seq_len = static_cast<std::size_t>(max_t + 1);

  // Samples are ordered by ascending id regardless of row order.
  std::vector<long long> sample_ids;
  std::unordered_map<long long, std::size_t> sample_index;
  for (const Row& r : rows) {
    if (sample_index.emplace(r.sample, 0).second) sample_ids.push_back(r.sample);
  }
  std::sort(sample_ids.begin(), sample_ids.end());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) sample_index[sample_ids[i]] = i;

  std::size_t n = sample_ids.size();
  std::vector<double> data(n * channels * seq_len, 0.0);
  std::vector<std::uint8_t> seen(n * channels * seq_len, 0);
  std::vector<int> labels(n, 0);
  std::vector<std::uint8_t> label_set(n, 0);

  for (const Row& r : rows) {
    std::size_t si = sample_index[r.sample];
    std::size_t cell = (si * channels + static_cast<std::size_t>(r.channel)) * seq_len +
                       static_cast<std::size_t>(r.t);
    if (seen[cell]) {
      throw DataError("'" + path.string() + "' line " + std::to_string(r.line_no) +
                      ": duplicate cell (sample " + std::to_string(r.sample) + ", channel " +
                      std::to_string(r.channel) + ", t " + std::to_string(r.t) + ")");
    }
    seen[cell] = 1;
    data[cell] = r.value;
    if (label_set[si] && labels[si] != r.label) {
      throw DataError("'" + path.string() + "' line " + std::to_string(r.line_no) +
                      ": sample " + std::to_string(r.sample) + " has conflicting labels " +
                      std::to_string(labels[si]) + " and " + std::to_string(r.label));
    }
    labels[si] = static_cast<int>(r.label);
    label_set[si] = 1;
  }

  // Every sample must fill the full (C, W) grid; report the first hole.
  for (std::size_t si = 0; si < n; ++si) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < seq_len; ++t) {
        if (!seen[(si * channels + c) * seq_len + t]) {
          throw DataError("'" + path.string() + "': sample " + std::to_string(sample_ids[si]) +
                          " is missing channel " + std::to_string(c) + ", t " + std::to_string(t) +
                          " (sequences must form a dense " + std::to_string(channels) + "x" +
                          std::to_string(seq_len) + " grid)");
        }
      }
    }
  }

  SequenceBatch batch;
  batch.data = Tensor::from_data({n, channels, 1, seq_len}, std::move(data));
  batch.labels = std::move(labels);
  batch.source = path.string();
  return batch;
}

void save_csv(const std::filesystem::path& path, const SequenceBatch& batch) {
  std::size_t n = batch.size(), c = batch.channels(), w = batch.timesteps();
  const double* data = batch.data.values().data();
  std::string out;
  out.reserve(n * c * w * 24 + 32);
  out += kCsvHeader;
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    int label = batch.labels.empty() ? 0 : batch.labels[i];
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t t = 0; t < w; ++t) {
        out += std::to_string(i);
        out += ',';
        out += std::to_string(label);
        out += ',';
        out += std::to_string(ch);
        out += ',';
        out += std::to_string(t);
        out += ',';
        out += ioutil::format_double(data[(i * c + ch) * w + t]);
        out += '\n';
      }
    }
  }
  ioutil::write_file(path, out);
}

void save_sinusoid_params(const std::filesystem::path& path, const SinusoidParams& params) {
  std::string out = "sample_id,channel,A,B\n";
  std::size_t n = params.channels == 0 ? 0 : params.a.size() / params.channels;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < params.channels; ++c) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(c);
      out += ',';
      out += ioutil::format_double(params.a[i * params.channels + c]);
      out += ',';
      out += ioutil::format_double(params.b[i * params.channels + c]);
      out += '\n';
    }
  }
  ioutil::write_file(path, out);
}

SequenceBatch normalize_channelwise(const SequenceBatch& batch) {
  std::size_t n = batch.size(), c = batch.channels(), w = batch.timesteps();
  const double* src = batch.data.values().data();
  std::vector<double> out(n * c * w);

  double count = static_cast<double>(n * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = src + (i * c + ch) * w;
      for (std::size_t t = 0; t < w; ++t) sum += row[t];
    }
    double mean = sum / count;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = src + (i * c + ch) * w;
      for (std::size_t t = 0; t < w; ++t) {
        double d = row[t] - mean;
        var += d * d;
      }
    }
    var /= count;
    if (var == 0.0) {
      throw DataError("normalize: channel " + std::to_string(ch) + " has zero variance");
    }
    double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = src + (i * c + ch) * w;
      double* orow = out.data() + (i * c + ch) * w;
      for (std::size_t t = 0; t < w; ++t) orow[t] = (row[t] - mean) * inv_std;
    }
  }

  SequenceBatch result;
  result.data = Tensor::from_data(batch.data.shape(), std::move(out));
  result.labels = batch.labels;
  result.source = batch.source;
  return result;
}

SequenceBatch slice_window(const SequenceBatch& batch, std::size_t start, std::size_t end) {
  std::size_t w = batch.timesteps();
  if (start >= end || end > w) {
    throw ParameterError("slice_window: window [" + std::to_string(start) + ", " +
                         std::to_string(end) + ") is invalid for " + std::to_string(w) +
                         " timesteps");
  }
  std::size_t n = batch.size(), c = batch.channels(), nw = end - start;
  const double* src = batch.data.values().data();
  std::vector<double> out(n * c * nw);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* row = src + (i * c + ch) * w + start;
      std::copy(row, row + nw, out.data() + (i * c + ch) * nw);
    }
  }
  SequenceBatch result;
  result.data = Tensor::from_data({n, c, 1, nw}, std::move(out));
  result.labels = batch.labels;
  result.source = batch.source;
  return result;
}

SequenceBatch filter_by_label(const SequenceBatch& batch, int label) {
  if (batch.labels.empty()) {
    throw DataError("class filter requested but the dataset has no labels");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i] == label) keep.push_back(i);
  }
  if (keep.empty()) {
    throw DataError("class filter " + std::to_string(label) + " matches no samples");
  }
  return gather(batch, keep);
}

SequenceBatch gather(const SequenceBatch& batch, std::span<const std::size_t> indices) {
  std::size_t c = batch.channels(), w = batch.timesteps();
  std::size_t stride = c * w;
  const double* src = batch.data.values().data();
  std::vector<double> out(indices.size() * stride);
  std::vector<int> labels;
  labels.reserve(batch.labels.empty() ? 0 : indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t idx = indices[i];
    if (idx >= batch.size()) {
      throw ParameterError("gather: index " + std::to_string(idx) + " out of range for " +
                           std::to_string(batch.size()) + " samples");
    }
    std::copy(src + idx * stride, src + (idx + 1) * stride, out.data() + i * stride);
    if (!batch.labels.empty()) labels.push_back(batch.labels[idx]);
  }
  SequenceBatch result;
  result.data = Tensor::from_data({indices.size(), c, 1, w}, std::move(out));
  result.labels = std::move(labels);
  result.source = batch.source;
  return result;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> batches;
  std::size_t full = n / batch_size;
  batches.reserve(full);
  for (std::size_t b = 0; b < full; ++b) {
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                         perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
  }
  return batches;
}

SequenceBatch load_dataset(const DatasetSpec& spec) {
  spec.validate();
  SequenceBatch batch;
  if (spec.kind == DatasetSpec::Kind::kSinusoid) {
    Rng rng(spec.seed);
    batch = simulate_sinusoids(spec.n_samples, spec.seq_len, spec.channels, rng);
  } else {
    batch = load_csv(spec.path);
  }
  if (spec.class_filter) batch = filter_by_label(batch, *spec.class_filter);
  if (spec.window) batch = slice_window(batch, spec.window->first, spec.window->second);
  if (spec.normalize) batch = normalize_channelwise(batch);
  return batch;
}

}  // namespace tsforge
