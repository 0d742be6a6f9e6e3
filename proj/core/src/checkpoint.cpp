#include "tsforge/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "io_util.hpp"

namespace tsforge {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'F', 'G', 'C', 'K', 'P', 'T'};
constexpr std::size_t kMaxRank = 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

void put_f64_block(std::string& out, const std::vector<double>& v) {
  for (double x : v) put_f64(out, x);
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    std::uint64_t len = u64();
    need(len, "string body");
    std::string s(buf_.data() + pos_, len);
    pos_ += len;
    return s;
  }

  std::vector<double> f64_block(std::uint64_t count) {
    need(count * 8, "f64 block");
    std::vector<double> v(count);
    for (std::uint64_t i = 0; i < count; ++i) v[i] = f64();
    return v;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

  void skip(std::size_t bytes) {
    need(bytes, "header");
    pos_ += bytes;
  }

  void need(std::uint64_t bytes, const char* what) const {
    if (pos_ + bytes > buf_.size()) {
      throw CheckpointError(CheckpointError::Cause::kTruncated,
                            std::string("checkpoint is truncated while reading ") + what);
    }
  }

 private:
  std::uint8_t byte() { return static_cast<std::uint8_t>(buf_[pos_++]); }

  const std::string& buf_;
  std::size_t pos_ = 0;
};

void put_params(std::string& out, const std::vector<NamedTensor>& params) {
  put_u64(out, params.size());
  for (const NamedTensor& p : params) {
    put_str(out, p.name);
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) put_u64(out, d);
    put_f64_block(out, p.values);
  }
}

std::vector<NamedTensor> read_params(Reader& r) {
  std::uint64_t count = r.u64();
  std::vector<NamedTensor> params;
  params.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor p;
    p.name = r.str();
    std::uint32_t rank = r.u32();
    if (rank > kMaxRank) {
      throw CheckpointError(CheckpointError::Cause::kCorrupt,
                            "checkpoint parameter '" + p.name + "' has implausible rank " +
                                std::to_string(rank));
    }
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint64_t dim = r.u64();
      p.shape.push_back(dim);
      n *= dim;
    }
    r.need(n * 8, "parameter values");
    p.values = r.f64_block(n);
    params.push_back(std::move(p));
  }
  return params;
}

void put_adam(std::string& out, const AdamSnapshot& a) {
  put_u64(out, a.step_count);
  put_u64(out, a.first_moment.size());
  for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
    put_u64(out, a.first_moment[i].size());
    put_f64_block(out, a.first_moment[i]);
    put_f64_block(out, a.second_moment[i]);
  }
}

AdamSnapshot read_adam(Reader& r, const std::vector<NamedTensor>& params) {
  AdamSnapshot a;
  a.step_count = r.u64();
  std::uint64_t count = r.u64();
  if (count != params.size()) {
    throw CheckpointError(CheckpointError::Cause::kCorrupt,
                          "optimizer state count does not match parameter count");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t len = r.u64();
    if (len != params[i].values.size()) {
      throw CheckpointError(CheckpointError::Cause::kCorrupt,
                            "optimizer state size does not match parameter '" + params[i].name +
                                "'");
    }
    a.first_moment.push_back(r.f64_block(len));
    a.second_moment.push_back(r.f64_block(len));
  }
  return a;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, ckpt.version);
  put_u64(out, ckpt.step);
  put_u64(out, ckpt.epoch);
  put_str(out, ckpt.config_json);
  put_str(out, ckpt.rng_state);
  put_params(out, ckpt.generator);
  put_params(out, ckpt.discriminator);
  put_adam(out, ckpt.adam_g);
  put_adam(out, ckpt.adam_d);
  ioutil::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string buf = ioutil::read_file(path);
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Cause::kBadMagic,
                          "'" + path.string() + "' is not a checkpoint file (bad magic)");
  }

  Checkpoint ckpt;
  Reader rd(buf);
  rd.skip(sizeof(kMagic));
  ckpt.version = rd.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Cause::kVersionMismatch,
                          "checkpoint version " + std::to_string(ckpt.version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  ckpt.step = rd.u64();
  ckpt.epoch = rd.u64();
  ckpt.config_json = rd.str();
  ckpt.rng_state = rd.str();
  ckpt.generator = read_params(rd);
  ckpt.discriminator = read_params(rd);
  ckpt.adam_g = read_adam(rd, ckpt.generator);
  ckpt.adam_d = read_adam(rd, ckpt.discriminator);
  if (rd.remaining() != 0) {
    throw CheckpointError(CheckpointError::Cause::kCorrupt,
                          "checkpoint has " + std::to_string(rd.remaining()) +
                              " trailing bytes");
  }
  return ckpt;
}

}  // namespace tsforge
