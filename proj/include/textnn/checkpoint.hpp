#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "textnn/arch.hpp"
#include "textnn/optim.hpp"

namespace textnn {

// --- architecture config as key=value text -------------------------------------

namespace detail {
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

// The generator inputs of a stock architecture, serialized as key=value
// lines. Enough to rebuild the spec via make_arch plus the recorded
// overrides; this is also the format the CLI accepts for spec files.
inline std::string arch_config_to_text(const ArchSpec& spec) {
  std::ostringstream out;
  out << "arch=" << spec.name << '\n'
      << "vocab_size=" << spec.vocab_size << '\n'
      << "embedding_dim=" << spec.embedding_dim << '\n'
      << "num_classes=" << spec.num_classes << '\n'
      << "pointwise_channels=" << spec.pointwise_channels << '\n'
      << "stacked_pair_for_h5=" << (spec.stacked_pair_for_h5 ? 1 : 0) << '\n'
      << "dropout_rate=" << detail::fmt_double(spec.dropout_rate) << '\n'
      << "l2_coeff=" << detail::fmt_double(spec.l2_coeff) << '\n'
      << "leaky_alpha=" << detail::fmt_double(spec.leaky_alpha) << '\n';
  return out.str();
}

inline ArchSpec arch_from_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractError("malformed architecture config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&kv](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ContractError(std::string("architecture config missing key '") + key + "'");
    return it->second;
  };
  ArchSpec spec = make_arch(need("arch"), std::stoull(need("vocab_size")),
                            std::stoull(need("num_classes")), std::stoull(need("embedding_dim")),
                            std::stoull(need("pointwise_channels")),
                            need("stacked_pair_for_h5") != "0");
  spec.dropout_rate = std::stod(need("dropout_rate"));
  spec.l2_coeff = std::stod(need("l2_coeff"));
  spec.leaky_alpha = std::stod(need("leaky_alpha"));
  return spec;
}

// --- binary container -----------------------------------------------------------

namespace detail {

constexpr char kCkptMagic[4] = {'T', 'X', 'N', 'N'};
constexpr std::uint32_t kCkptVersion = 1;

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { unsigned_le(v, 4); }
  void u64(std::uint64_t v) { unsigned_le(v, 8); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }

 private:
  void unsigned_le(std::uint64_t v, int width) {
    char buf[8];
    for (int i = 0; i < width; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, width);
  }
  std::ostream& out_;
};

class ByteReader {
 public:
  ByteReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError("truncated checkpoint '" + path_ + "'");
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(unsigned_le(4)); }
  std::uint64_t u64() { return unsigned_le(8); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    sanity(n);
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  std::vector<double> doubles(std::uint64_t n) {
    sanity(n);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  // Guards length fields so a corrupted header cannot trigger a huge
  // allocation before the read fails.
  void sanity(std::uint64_t n) const {
    if (n > (1ULL << 32))
      throw CheckpointError("implausible length field in checkpoint '" + path_ + "'");
  }

 private:
  std::uint64_t unsigned_le(int width) {
    char buf[8];
    bytes(buf, static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace detail

struct BnBuffers {
  double momentum = 0.9;
  double epsilon = 1e-5;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

// Everything a checkpoint stores, in memory form.
struct CheckpointData {
  std::string spec_text;
  std::map<std::string, std::pair<Shape, std::vector<double>>> params;
  std::map<std::string, BnBuffers> bn;
  std::optional<OptimizerState> optimizer;
};

// Writes header, spec text, named parameter tensors, batch-norm buffers and
// (optionally) the optimizer state; the file appears atomically via a
// temp-file rename.
inline void save_checkpoint(const Model& model, const OptimizerState* optimizer,
                            const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    detail::ByteWriter w(out);
    w.bytes(detail::kCkptMagic, 4);
    w.u32(detail::kCkptVersion);
    const std::string spec_text = arch_config_to_text(model.spec());
    w.u64(detail::fnv1a(spec_text));
    w.str(spec_text);
    w.u64(model.params().size());
    for (const auto& [name, tensor] : model.params()) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(tensor.rank()));
      for (std::size_t d = 0; d < tensor.rank(); ++d) w.u64(tensor.dim(d));
      w.doubles(tensor.value());
    }
    w.u64(model.bn_states().size());
    for (const auto& [name, st] : model.bn_states()) {
      w.str(name);
      w.u64(st.features());
      w.f64(st.momentum);
      w.f64(st.epsilon);
      w.doubles(st.running_mean);
      w.doubles(st.running_var);
    }
    if (optimizer) {
      w.bytes("\x01", 1);
      w.bytes(optimizer->phase == Phase::Adam ? "\x00" : "\x01", 1);
      w.u64(optimizer->step);
      w.u64(optimizer->switch_step);
      w.u64(optimizer->decay_interval);
      w.f64(optimizer->adam_lr);
      w.f64(optimizer->sgd_lr);
      w.f64(optimizer->beta1);
      w.f64(optimizer->beta2);
      w.f64(optimizer->epsilon);
      w.f64(optimizer->momentum);
      w.f64(optimizer->decay_coeff);
      for (const auto* slots : {&optimizer->m, &optimizer->v, &optimizer->velocity}) {
        w.u64(slots->size());
        for (const auto& [name, data] : *slots) {
          w.str(name);
          w.u64(data.size());
          w.doubles(data);
        }
      }
    } else {
      w.bytes("\x00", 1);
    }
    out.flush();
    if (!out) throw IoError("write failure on '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  detail::ByteReader r(in, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic bytes)");
  const std::uint32_t version = r.u32();
  if (version != detail::kCkptVersion)
    throw CheckpointError("checkpoint '" + path.string() + "' has unsupported version " +
                          std::to_string(version));
  CheckpointData data;
  const std::uint64_t stored_hash = r.u64();
  data.spec_text = r.str();
  if (detail::fnv1a(data.spec_text) != stored_hash)
    throw CheckpointError("checkpoint '" + path.string() + "' spec hash mismatch (corrupted)");
  const std::uint64_t n_params = r.u64();
  r.sanity(n_params);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    r.sanity(rank);
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.u64();
      numel *= d;
    }
    r.sanity(numel);
    data.params.emplace(name, std::make_pair(std::move(shape), r.doubles(numel)));
  }
  const std::uint64_t n_bn = r.u64();
  r.sanity(n_bn);
  for (std::uint64_t i = 0; i < n_bn; ++i) {
    const std::string name = r.str();
    BnBuffers buf;
    const std::uint64_t features = r.u64();
    buf.momentum = r.f64();
    buf.epsilon = r.f64();
    buf.running_mean = r.doubles(features);
    buf.running_var = r.doubles(features);
    data.bn.emplace(name, std::move(buf));
  }
  char has_opt;
  r.bytes(&has_opt, 1);
  if (has_opt == 1) {
    OptimizerState opt;
    char phase;
    r.bytes(&phase, 1);
    opt.phase = phase == 0 ? Phase::Adam : Phase::Sgd;
    opt.step = r.u64();
    opt.switch_step = r.u64();
    opt.decay_interval = r.u64();
    opt.adam_lr = r.f64();
    opt.sgd_lr = r.f64();
    opt.beta1 = r.f64();
    opt.beta2 = r.f64();
    opt.epsilon = r.f64();
    opt.momentum = r.f64();
    opt.decay_coeff = r.f64();
    for (auto* slots : {&opt.m, &opt.v, &opt.velocity}) {
      const std::uint64_t n = r.u64();
      r.sanity(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::string name = r.str();
        const std::uint64_t len = r.u64();
        slots->emplace(name, r.doubles(len));
      }
    }
    data.optimizer = std::move(opt);
  } else if (has_opt != 0) {
    throw CheckpointError("checkpoint '" + path.string() + "' has a corrupt optimizer flag");
  }
  return data;
}

// Copies checkpoint values into an existing model in place (parameter tensor
// handles stay valid, so batch-norm states keep sharing gamma/beta).
inline void apply_checkpoint(Model& model, const CheckpointData& data) {
  if (data.params.size() != model.params().size())
    throw CheckpointError("checkpoint stores " + std::to_string(data.params.size()) +
                          " parameters but the model has " +
                          std::to_string(model.params().size()));
  for (auto& [name, tensor] : model.params()) {
    auto it = data.params.find(name);
    if (it == data.params.end())
      throw CheckpointError("checkpoint lacks parameter '" + name + "'");
    if (it->second.first != tensor.shape())
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                            shape_str(it->second.first) + ", model expects " +
                            shape_str(tensor.shape()));
    tensor.value_mut() = it->second.second;
  }
  for (auto& [name, st] : model.bn_states()) {
    auto it = data.bn.find(name);
    if (it == data.bn.end())
      throw CheckpointError("checkpoint lacks batch-norm state '" + name + "'");
    if (it->second.running_mean.size() != st.features())
      throw CheckpointError("checkpoint batch-norm state '" + name + "' has wrong width");
    st.momentum = it->second.momentum;
    st.epsilon = it->second.epsilon;
    st.running_mean = it->second.running_mean;
    st.running_var = it->second.running_var;
  }
}

// Rebuilds a model from a checkpoint alone: spec from the embedded config
// text, values from the stored tensors.
inline Model model_from_checkpoint(const CheckpointData& data) {
  ArchSpec spec = arch_from_config_text(data.spec_text);
  Rng rng(0);  // initial draws are immediately overwritten
  Model model(std::move(spec), rng);
  apply_checkpoint(model, data);
  return model;
}

}  // namespace textnn
