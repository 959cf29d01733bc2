#include "lrd/cli/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lrd {

using nlohmann::json;

namespace {

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_bytes(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::uint64_t n, const char* what) {
    if (n > remaining()) {
      throw TruncatedCheckpointError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                                     std::to_string(pos_) + " of " + std::to_string(b_.size()));
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const Detector& model, const ExperimentConfig& cfg, const std::string& role,
                           std::int64_t step) {
  Checkpoint c;
  c.config = cfg;
  c.role = role;
  c.step = step;
  for (const auto& p : model.parameters()) c.tensors.emplace_back(p.name, p.tensor);
  return c;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const json meta{{"config", config_to_json(ckpt.config)}, {"role", ckpt.role}, {"step", ckpt.step}};
  put_bytes(out, meta.dump());
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto e : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    for (float v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    if (bytes.size() < sizeof(kCheckpointMagic) &&
        std::memcmp(bytes.data(), kCheckpointMagic, bytes.size()) == 0) {
      throw TruncatedCheckpointError("checkpoint truncated inside the magic bytes");
    }
    throw BadMagicError("not a checkpoint file (bad magic bytes)");
  }
  r.take(sizeof(kCheckpointMagic), "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw BadVersionError("unsupported checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  const std::string meta_text = r.take(meta_len, "metadata");
  Checkpoint c;
  try {
    const json meta = json::parse(meta_text);
    c.config = config_from_json(meta.at("config"));
    c.role = meta.at("role").get<std::string>();
    c.step = meta.at("step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("checkpoint metadata is corrupt: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("checkpoint config is corrupt: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    std::string name = r.take(name_len, "tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw CheckpointFormatError("tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<std::int64_t>(r.get<std::uint64_t>("tensor extent"));
      if (e < 0) throw CheckpointFormatError("tensor '" + name + "' has a negative extent");
      numel *= static_cast<std::uint64_t>(e);
    }
    if (numel * 4 > r.remaining()) {
      throw TruncatedCheckpointError("checkpoint truncated inside tensor '" + name + "'");
    }
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) {
    throw CheckpointFormatError(std::to_string(r.remaining()) + " trailing bytes after the last tensor");
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

void check_compatible(const ExperimentConfig& saved, const ExperimentConfig& run) {
  auto mismatch = [](const std::string& field, const json& a, const json& b) {
    throw IncompatibleCheckpointError("checkpoint was saved with " + field + " = " + a.dump() +
                                      " but the run uses " + b.dump());
  };
  if (saved.k != run.k) mismatch("k", saved.k, run.k);
  const json a = config_to_json(saved), b = config_to_json(run);
  for (const char* section : {"backbone", "head"}) {
    for (const auto& [key, value] : a.at(section).items()) {
      if (value != b.at(section).at(key)) mismatch(std::string(section) + "." + key, value, b.at(section).at(key));
    }
  }
}

Detector restore_detector(const Checkpoint& ckpt) {
  if (ckpt.role != "teacher" && ckpt.role != "student") {
    throw CheckpointFormatError("unknown checkpoint role '" + ckpt.role + "'");
  }
  Detector model = Detector::from_config(ckpt.config, ckpt.role == "student");
  ParamList saved;
  for (const auto& [name, t] : ckpt.tensors) saved.push_back({name, t});
  const ParamList params = model.parameters();
  if (saved.size() != params.size()) {
    throw IncompatibleCheckpointError("checkpoint holds " + std::to_string(saved.size()) + " tensors, the " +
                                      ckpt.role + " model has " + std::to_string(params.size()));
  }
  try {
    copy_values(saved, params);
  } catch (const std::invalid_argument& e) {
    throw IncompatibleCheckpointError(std::string("checkpoint does not match its model: ") + e.what());
  }
  return model;
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : encode_checkpoint(ckpt)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lrd
