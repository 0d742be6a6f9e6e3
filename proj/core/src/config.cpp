#include "tsforge/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace tsforge {

namespace {

using nlohmann::json;

std::string label_mode_name(LabelMode mode) {
  switch (mode) {
    case LabelMode::kHard: return "hard";
    case LabelMode::kSoft: return "soft";
    case LabelMode::kFlipped: return "flipped";
  }
  return "hard";
}

std::string kind_name(DatasetSpec::Kind kind) {
  return kind == DatasetSpec::Kind::kSinusoid ? "sinusoid" : "csv";
}

// Collects per-field problems while reading the flat document so one pass
// reports everything, not just the first offence.
class FieldReader {
 public:
  explicit FieldReader(const json& doc) : doc_(doc) {}

  void read_u64(const char* key, std::size_t& target) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_unsigned()) {
      problems_.push_back(std::string(key) + ": expected a non-negative integer");
      return;
    }
    target = v->get<std::size_t>();
  }

  void read_seed(const char* key, std::uint64_t& target) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_unsigned()) {
      problems_.push_back(std::string(key) + ": expected a non-negative integer");
      return;
    }
    target = v->get<std::uint64_t>();
  }

  void read_double(const char* key, double& target) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number()) {
      problems_.push_back(std::string(key) + ": expected a number");
      return;
    }
    target = v->get<double>();
  }

  void read_bool(const char* key, bool& target) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) {
      problems_.push_back(std::string(key) + ": expected a boolean");
      return;
    }
    target = v->get<bool>();
  }

  void read_string(const char* key, std::string& target) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) {
      problems_.push_back(std::string(key) + ": expected a string");
      return;
    }
    target = v->get<std::string>();
  }

  // null clears the optional; an integer sets it.
  void read_opt_int(const char* key, std::optional<int>& target) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      target.reset();
      return;
    }
    if (!v->is_number_integer()) {
      problems_.push_back(std::string(key) + ": expected an integer or null");
      return;
    }
    target = v->get<int>();
  }

  void read_opt_u64(const char* key, std::optional<std::size_t>& target) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      target.reset();
      return;
    }
    if (!v->is_number_unsigned()) {
      problems_.push_back(std::string(key) + ": expected a non-negative integer or null");
      return;
    }
    target = v->get<std::size_t>();
  }

  void finish() {
    for (const auto& [key, value] : doc_.items()) {
      if (!consumed_.count(key)) problems_.push_back(key + ": unknown key");
    }
    if (!problems_.empty()) {
      std::string msg = "invalid config fields:";
      for (const std::string& p : problems_) msg += "\n  " + p;
      throw ConfigError(msg);
    }
  }

  std::vector<std::string>& problems() { return problems_; }

 private:
  const json* find(const char* key) {
    auto it = doc_.find(key);
    if (it == doc_.end()) return nullptr;
    consumed_.insert(key);
    return &*it;
  }

  const json& doc_;
  std::set<std::string> consumed_;
  std::vector<std::string> problems_;
};

}  // namespace

GanConfig RunConfig::resolved_model() const {
  GanConfig m = model;
  m.channels = dataset.channels;
  m.seq_len = dataset.window ? dataset.window->second - dataset.window->first : dataset.seq_len;
  return m;
}

void RunConfig::validate() const {
  std::vector<std::string> bad;

  if (dataset.kind == DatasetSpec::Kind::kCsv && dataset.path.empty()) {
    bad.push_back("dataset.path: required for csv datasets");
  }
  if (dataset.kind == DatasetSpec::Kind::kSinusoid && dataset.n_samples == 0) {
    bad.push_back("dataset.n_samples: a simulation of 0 sequences is empty");
  }
  if (dataset.seq_len == 0) bad.push_back("dataset.seq_len: must be >= 1");
  if (dataset.channels == 0) bad.push_back("dataset.channels: must be >= 1");
  if (dataset.window) {
    if (dataset.window->first >= dataset.window->second) {
      bad.push_back("dataset.window_start: must be < dataset.window_end");
    }
    if (dataset.window->second > dataset.seq_len) {
      bad.push_back("dataset.window_end: exceeds dataset.seq_len");
    }
  }

  GanConfig m = resolved_model();
  if (m.latent_dim == 0) bad.push_back("model.latent_dim: must be >= 1");
  if (m.embed_dim == 0) bad.push_back("model.embed_dim: must be >= 1");
  if (m.patch_len == 0) {
    bad.push_back("model.patch_len: must be >= 1");
  } else if (m.seq_len % m.patch_len != 0) {
    bad.push_back("model.patch_len: does not divide the effective sequence length " +
                  std::to_string(m.seq_len));
  }
  if (m.num_heads == 0) {
    bad.push_back("model.num_heads: must be >= 1");
  } else {
    if (m.embed_dim % m.num_heads != 0) {
      bad.push_back("model.num_heads: does not divide model.embed_dim");
    }
    if (m.patch_len != 0 && (m.patch_len * m.embed_dim) % m.num_heads != 0) {
      bad.push_back("model.num_heads: does not divide the generator token width " +
                    std::to_string(m.patch_len * m.embed_dim));
    }
  }
  if (m.mlp_ratio == 0) bad.push_back("model.mlp_ratio: must be >= 1");
  if (m.dropout_p < 0.0 || m.dropout_p >= 1.0) bad.push_back("model.dropout: must lie in [0, 1)");
  if (m.depth == 0) bad.push_back("model.depth: must be >= 1");

  if (train.lr_g <= 0.0) bad.push_back("train.lr_g: must be positive");
  if (train.lr_d <= 0.0) bad.push_back("train.lr_d: must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < train.beta2 && train.beta2 < 1.0)) {
    bad.push_back("train.beta1/train.beta2: need 0 <= beta1 < beta2 < 1");
  }
  if (train.adam_eps <= 0.0) bad.push_back("train.adam_eps: must be positive");
  if (train.batch_size == 0) bad.push_back("train.batch_size: must be >= 1");
  if (train.labels.mode == LabelMode::kSoft &&
      !(train.labels.soft_fake >= 0.0 && train.labels.soft_fake < train.labels.soft_real &&
        train.labels.soft_real <= 1.0)) {
    bad.push_back("train.real_label/train.fake_label: need 0 <= fake < real <= 1");
  }

  if (metrics.bins == 0) bad.push_back("eval.bins: must be >= 1");

  if (!bad.empty()) {
    std::string msg = "invalid config fields:";
    for (const std::string& p : bad) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

std::string RunConfig::to_json() const {
  json j;
  j["dataset.kind"] = kind_name(dataset.kind);
  j["dataset.path"] = dataset.path;
  j["dataset.n_samples"] = dataset.n_samples;
  j["dataset.seq_len"] = dataset.seq_len;
  j["dataset.channels"] = dataset.channels;
  j["dataset.seed"] = dataset.seed;
  j["dataset.class_filter"] = dataset.class_filter ? json(*dataset.class_filter) : json(nullptr);
  j["dataset.window_start"] = dataset.window ? json(dataset.window->first) : json(nullptr);
  j["dataset.window_end"] = dataset.window ? json(dataset.window->second) : json(nullptr);
  j["dataset.normalize"] = dataset.normalize;
  j["model.latent_dim"] = model.latent_dim;
  j["model.embed_dim"] = model.embed_dim;
  j["model.patch_len"] = model.patch_len;
  j["model.num_heads"] = model.num_heads;
  j["model.mlp_ratio"] = model.mlp_ratio;
  j["model.dropout"] = model.dropout_p;
  j["model.depth"] = model.depth;
  j["train.lr_g"] = train.lr_g;
  j["train.lr_d"] = train.lr_d;
  j["train.beta1"] = train.beta1;
  j["train.beta2"] = train.beta2;
  j["train.adam_eps"] = train.adam_eps;
  j["train.batch_size"] = train.batch_size;
  j["train.epochs"] = train.epochs;
  j["train.label_mode"] = label_mode_name(train.labels.mode);
  j["train.real_label"] = train.labels.soft_real;
  j["train.fake_label"] = train.labels.soft_fake;
  j["train.seed"] = train.seed;
  j["train.checkpoint_every"] = train.checkpoint_every;
  j["eval.bins"] = metrics.bins;
  j["eval.js_sum_mode"] = metrics.js_sum_mode;
  j["out_dir"] = out_dir;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config must be a flat JSON object");

  RunConfig cfg;
  FieldReader r(doc);

  std::string kind = kind_name(cfg.dataset.kind);
  r.read_string("dataset.kind", kind);
  if (kind == "sinusoid") {
    cfg.dataset.kind = DatasetSpec::Kind::kSinusoid;
  } else if (kind == "csv") {
    cfg.dataset.kind = DatasetSpec::Kind::kCsv;
  } else {
    r.problems().push_back("dataset.kind: expected 'sinusoid' or 'csv'");
  }
  r.read_string("dataset.path", cfg.dataset.path);
  r.read_u64("dataset.n_samples", cfg.dataset.n_samples);
  r.read_u64("dataset.seq_len", cfg.dataset.seq_len);
  r.read_u64("dataset.channels", cfg.dataset.channels);
  r.read_seed("dataset.seed", cfg.dataset.seed);
  r.read_opt_int("dataset.class_filter", cfg.dataset.class_filter);
  std::optional<std::size_t> wstart, wend;
  r.read_opt_u64("dataset.window_start", wstart);
  r.read_opt_u64("dataset.window_end", wend);
  if (wstart.has_value() != wend.has_value()) {
    r.problems().push_back("dataset.window_start/dataset.window_end: set both or neither");
  } else if (wstart) {
    cfg.dataset.window = std::make_pair(*wstart, *wend);
  }
  r.read_bool("dataset.normalize", cfg.dataset.normalize);

  r.read_u64("model.latent_dim", cfg.model.latent_dim);
  r.read_u64("model.embed_dim", cfg.model.embed_dim);
  r.read_u64("model.patch_len", cfg.model.patch_len);
  r.read_u64("model.num_heads", cfg.model.num_heads);
  r.read_u64("model.mlp_ratio", cfg.model.mlp_ratio);
  r.read_double("model.dropout", cfg.model.dropout_p);
  r.read_u64("model.depth", cfg.model.depth);

  r.read_double("train.lr_g", cfg.train.lr_g);
  r.read_double("train.lr_d", cfg.train.lr_d);
  r.read_double("train.beta1", cfg.train.beta1);
  r.read_double("train.beta2", cfg.train.beta2);
  r.read_double("train.adam_eps", cfg.train.adam_eps);
  r.read_u64("train.batch_size", cfg.train.batch_size);
  r.read_u64("train.epochs", cfg.train.epochs);
  std::string mode = label_mode_name(cfg.train.labels.mode);
  r.read_string("train.label_mode", mode);
  if (mode == "hard") {
    cfg.train.labels.mode = LabelMode::kHard;
  } else if (mode == "soft") {
    cfg.train.labels.mode = LabelMode::kSoft;
  } else if (mode == "flipped") {
    cfg.train.labels.mode = LabelMode::kFlipped;
  } else {
    r.problems().push_back("train.label_mode: expected 'hard', 'soft' or 'flipped'");
  }
  r.read_double("train.real_label", cfg.train.labels.soft_real);
  r.read_double("train.fake_label", cfg.train.labels.soft_fake);
  r.read_seed("train.seed", cfg.train.seed);
  r.read_u64("train.checkpoint_every", cfg.train.checkpoint_every);

  r.read_u64("eval.bins", cfg.metrics.bins);
  r.read_bool("eval.js_sum_mode", cfg.metrics.js_sum_mode);

  r.read_string("out_dir", cfg.out_dir);

  r.finish();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(std::move(buf).str());
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write config snapshot to '" + path.string() + "'");
  out << to_json();
}

bool RunConfig::equivalent_ignoring_epochs(const RunConfig& other) const {
  RunConfig a = *this;
  RunConfig b = other;
  a.train.epochs = b.train.epochs = 0;
  a.train.checkpoint_every = b.train.checkpoint_every = 0;
  a.out_dir = b.out_dir = "";
  return a.to_json() == b.to_json();
}

}  // namespace tsforge
