#include "serda/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "serda/error.hpp"

namespace serda {

void ParamSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

bool ParamSet::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t ParamSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter " + std::string(name));
  return it->second;
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_)
    if (!v.all_finite()) return false;
  return true;
}

ParamVars::ParamVars(const ParamSet& params, bool trainable) : params_(&params) {
  vars_.reserve(params.size());
  for (const auto& v : params.values()) vars_.push_back(trainable ? ad::Var::leaf(v) : ad::Var::constant(v));
}

std::vector<Tensor> ParamVars::gradients(const ad::Gradients& grads) const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const auto& var : vars_) {
    const Tensor* g = grads.find(var);
    out.push_back(g ? *g : Tensor(var.shape(), 0.0));
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'E', 'R', 'D', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& is, const std::string& what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("checkpoint truncated reading " + what);
  return v;
}

std::string get_string(std::ifstream& is, const std::string& what) {
  const auto n = get<std::uint64_t>(is, what + " length");
  if (n > (1ULL << 32)) throw FormatError("checkpoint " + what + " length implausible");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put_string(os, ckpt.config_json);
  put<std::uint64_t>(os, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Tensor& t = ckpt.params.values()[i];
    put_string(os, ckpt.params.names()[i]);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_json = get_string(is, "config");
  const auto count = get<std::uint64_t>(is, "parameter count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is, "parameter name");
    const auto rank = get<std::uint32_t>(is, name + " rank");
    if (rank > 8) throw FormatError("parameter " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint64_t>(is, name + " shape");
    std::vector<double> data(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw FormatError("checkpoint truncated reading " + name + " values");
    }
    ckpt.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace serda
