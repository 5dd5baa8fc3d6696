#pragma once

// Binary checkpoint for one or more networks plus a JSON sidecar.
//
//   "EQRLGAT\0"  u32 format_version  u32 network_count
//   per network: u32 in_dim  u32 hidden_dim  u32 head_dim  u64 seed
//   then, per network, per layer: W, a, b as little-endian float64
//   then, per network, per layer: leaky_slope as float64

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/gnn/gat.hpp"
#include "json.hpp"

namespace eqrl::gnn {

constexpr std::uint32_t kCheckpointFormatVersion = 1;
constexpr char kCheckpointMagic[8] = {'E', 'Q', 'R', 'L', 'G', 'A', 'T', '\0'};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class LeReader {
 public:
  LeReader(const std::string& data, std::string name) : data_(data), name_(std::move(name)) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw FormatError(name_ + ": truncated checkpoint");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }

  void bytes(char* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw FormatError(name_ + ": truncated checkpoint");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<const GatNetworkParams*>& nets,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto* n : nets) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n->in_dim()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kHiddenDim));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n->head_dim));
    detail::put_le<std::uint64_t>(out, n->seed);
  }
  for (const auto* n : nets)
    n->for_each_tensor([&](const Tensor& t) {
      for (double v : t.data()) detail::put_le(out, v);
    });
  for (const auto* n : nets)
    for (const auto& l : n->layers) detail::put_le(out, l.leaky_slope);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw EnvironmentError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  nlohmann::json side = metadata;
  side["format_version"] = kCheckpointFormatVersion;
  side["networks"] = nlohmann::json::array();
  for (const auto* n : nets) side["networks"].push_back({{"in_dim", n->in_dim()}, {"head_dim", n->head_dim}, {"seed", n->seed}});
  std::ofstream(sidecar_path(path)) << side.dump(2) << "\n";
}

struct Checkpoint {
  std::vector<GatNetworkParams> networks;
  nlohmann::json metadata;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw EnvironmentError("cannot read checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::LeReader r(data, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError(path.string() + ": not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion)
    throw FormatError(path.string() + ": unsupported format_version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  if (count == 0 || count > 16) throw FormatError(path.string() + ": bad network count");

  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto in = r.get<std::uint32_t>();
    const auto hidden = r.get<std::uint32_t>();
    const auto head = r.get<std::uint32_t>();
    const auto seed = r.get<std::uint64_t>();
    if (hidden != kHiddenDim || in == 0 || in > 1024 || head == 0 || head > 1024)
      throw FormatError(path.string() + ": bad network dimensions");
    ck.networks.push_back(init_params(seed, head, in));
  }
  for (auto& n : ck.networks)
    n.for_each_tensor([&](Tensor& t) {
      for (double& v : t.data()) {
        v = r.get<double>();
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite parameter");
      }
    });
  for (auto& n : ck.networks)
    for (auto& l : n.layers) l.leaky_slope = r.get<double>();
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");

  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    try {
      std::ifstream s(side);
      ck.metadata = nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
  }
  return ck;
}

}  // namespace eqrl::gnn
