#pragma once

#include <filesystem>
#include <string>

#include "tsforge/data.hpp"
#include "tsforge/gan.hpp"
#include "tsforge/training.hpp"

namespace tsforge {

struct MetricOptions {
  std::size_t bins = 50;
  bool js_sum_mode = false;
};

// Everything a run needs, serializable as a flat key-value JSON document
// (dotted keys, one object). The snapshot written into a run directory is
// deterministic: keys are emitted sorted.
struct RunConfig {
  DatasetSpec dataset;
  // model.seq_len and model.channels are derived from the dataset (after any
  // window slicing); use resolved_model() wherever a complete GanConfig is
  // needed.
  GanConfig model;
  TrainConfig train;
  MetricOptions metrics;
  std::string out_dir;

  GanConfig resolved_model() const;

  // ConfigError listing every offending field by name.
  void validate() const;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);
  void write_snapshot(const std::filesystem::path& path) const;

  bool equivalent_ignoring_epochs(const RunConfig& other) const;
};

}  // namespace tsforge
