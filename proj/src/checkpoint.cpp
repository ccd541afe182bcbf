#include "gazemoe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gazemoe/error.hpp"

namespace gazemoe {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'O', 'E'};
constexpr std::uint32_t kDtypeF64 = 1;
const std::string kMomentM = "adam.m/";
const std::string kMomentV = "adam.v/";

template <typename T>
void put(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : bytes_(b) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint: truncated file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  Json header{{"config", c.config}, {"step", c.step}, {"meta", c.meta}};
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (shape_numel(t.shape) != t.data.size())
      throw DimensionError("checkpoint tensor " + t.name + ": shape " + shape_str(t.shape) + " does not match data");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4).data(), kMagic, 4) != 0) throw ParseError("checkpoint: bad magic (expected GMOE)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = r.get<std::uint32_t>();
  Checkpoint c;
  try {
    const Json header = Json::parse(r.take(hlen));
    c.config = header.at("config").get<DecoderConfig>();
    c.step = header.at("step").get<std::size_t>();
    c.meta = header.value("meta", Json::object());
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = std::string(r.take(r.get<std::uint32_t>()));
    const auto dtype = r.get<std::uint32_t>();
    if (dtype != kDtypeF64) throw ParseError("checkpoint tensor " + t.name + ": unsupported dtype " + std::to_string(dtype));
    const auto ndim = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) v = r.get<double>();
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes after last tensor");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const GazeMoE& model, const AdamState* adam, Json meta) {
  Checkpoint c;
  c.config = model.config();
  c.meta = std::move(meta);
  for (const auto& [name, t] : model.params().entries()) {
    const auto d = t.data();
    c.tensors.push_back({name, t.shape(), {d.begin(), d.end()}});
  }
  if (adam) {
    c.step = adam->step;
    for (const auto& [name, t] : model.params().entries()) {
      const auto it = adam->moments.find(name);
      if (it == adam->moments.end() || it->second.m.empty()) continue;
      c.tensors.push_back({kMomentM + name, t.shape(), it->second.m});
      c.tensors.push_back({kMomentV + name, t.shape(), it->second.v});
    }
  }
  return c;
}

GazeMoE restore_model(const Checkpoint& c) {
  c.config.validate();
  GazeMoE model(c.config, 0);
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& t : c.tensors) by_name[t.name] = &t;
  for (auto& [name, t] : model.params().entries()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing parameter " + name);
    if (it->second->shape != t.shape())
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(it->second->shape) +
                        ", model expects " + shape_str(t.shape()));
    std::copy(it->second->data.begin(), it->second->data.end(), t.mutable_data().begin());
  }
  return model;
}

AdamState restore_adam(const Checkpoint& c) {
  AdamState s;
  s.step = c.step;
  for (const auto& t : c.tensors) {
    if (t.name.starts_with(kMomentM)) s.moments[t.name.substr(kMomentM.size())].m = t.data;
    else if (t.name.starts_with(kMomentV)) s.moments[t.name.substr(kMomentV.size())].v = t.data;
  }
  return s;
}

}  // namespace gazemoe
