// SPDX-License-Identifier: Apache-2.0
#include "mvdet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "mvdet/error.hpp"

namespace mvdet {

namespace {

constexpr const char* kMagic = "MVCKPT 1";

template <class T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <class T>
void pack_value(T v, std::vector<uint8_t>& out) {
  if constexpr (sizeof(T) == 4) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  } else {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }
}

template <class T>
T unpack_value(const uint8_t* p) {
  T v;
  if constexpr (sizeof(T) == 4) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(p[i]) << (8 * i);
    std::memcpy(&v, &bits, 4);
  } else {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return v;
}

int value_width(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  fail(Errc::malformed_header, "checkpoint: unknown dtype '" + dtype + "'");
}

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Consume one \n-terminated line starting at pos; advances pos past the \n.
std::string take_line(const std::string& data, size_t& pos) {
  size_t nl = data.find('\n', pos);
  if (nl == std::string::npos) fail(Errc::malformed_header, "checkpoint: truncated header line");
  std::string line = data.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "config " << ckpt.config_text.size() << '\n';
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  out << "tensors " << ckpt.entries.size() << '\n';
  for (const CheckpointEntry& e : ckpt.entries) {
    if (e.name.empty() || e.name.find_first_of(" \n") != std::string::npos)
      fail(Errc::bad_argument, "checkpoint: tensor name unusable: '" + e.name + "'");
    int64_t n = shape_numel(e.shape);
    if (static_cast<int64_t>(e.raw.size()) != n * value_width(e.dtype))
      fail(Errc::size_mismatch, "checkpoint: payload size mismatch for '" + e.name + "'");
    out << "tensor " << e.name << ' ' << e.dtype << ' ' << e.shape.size();
    for (int d : e.shape) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<const char*>(e.raw.data()),
              static_cast<std::streamsize>(e.raw.size()));
  }
  out << "end\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::io_failure, "cannot open for writing: " + path);
  std::string s = out.str();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) fail(Errc::io_failure, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::missing_file, "cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) fail(Errc::io_failure, "read failed: " + path);
  std::string data = ss.str();

  size_t pos = 0;
  if (take_line(data, pos) != kMagic)
    fail(Errc::malformed_header, path + ": not a checkpoint (bad magic)");

  Checkpoint ckpt;
  {
    std::istringstream line(take_line(data, pos));
    std::string word;
    size_t nbytes = 0;
    if (!(line >> word >> nbytes) || word != "config")
      fail(Errc::malformed_header, path + ": expected config block");
    if (pos + nbytes > data.size()) fail(Errc::malformed_header, path + ": truncated config");
    ckpt.config_text = data.substr(pos, nbytes);
    pos += nbytes;
  }
  size_t count = 0;
  {
    std::istringstream line(take_line(data, pos));
    std::string word;
    if (!(line >> word >> count) || word != "tensors")
      fail(Errc::malformed_header, path + ": expected tensor count");
  }
  for (size_t i = 0; i < count; ++i) {
    std::istringstream line(take_line(data, pos));
    std::string word;
    CheckpointEntry e;
    size_t rank = 0;
    if (!(line >> word >> e.name >> e.dtype >> rank) || word != "tensor")
      fail(Errc::malformed_header, path + ": bad tensor header");
    e.shape.resize(rank);
    for (size_t d = 0; d < rank; ++d) {
      if (!(line >> e.shape[d]) || e.shape[d] < 1)
        fail(Errc::malformed_header, path + ": bad shape for '" + e.name + "'");
    }
    int64_t nbytes = shape_numel(e.shape) * value_width(e.dtype);
    if (pos + static_cast<size_t>(nbytes) > data.size())
      fail(Errc::malformed_header, path + ": truncated payload for '" + e.name + "'");
    const uint8_t* p = reinterpret_cast<const uint8_t*>(data.data()) + pos;
    e.raw.assign(p, p + nbytes);
    pos += static_cast<size_t>(nbytes);
    ckpt.entries.push_back(std::move(e));
  }
  if (take_line(data, pos) != "end") fail(Errc::malformed_header, path + ": missing end marker");
  return ckpt;
}

template <class T>
std::vector<CheckpointEntry> pack_params(const ParamStoreT<T>& params) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : params.items()) {
    CheckpointEntry e;
    e.name = p->name;
    e.dtype = dtype_name<T>();
    e.shape = p->value.shape;
    e.raw.reserve(static_cast<size_t>(p->value.numel()) * sizeof(T));
    for (int64_t i = 0; i < p->value.numel(); ++i) pack_value<T>(p->value[i], e.raw);
    out.push_back(std::move(e));
  }
  return out;
}

template <class T>
void unpack_params(const Checkpoint& ckpt, ParamStoreT<T>& params) {
  if (ckpt.entries.size() != params.items().size())
    fail(Errc::size_mismatch, "checkpoint holds " + std::to_string(ckpt.entries.size()) +
                                  " tensors, model expects " +
                                  std::to_string(params.items().size()));
  for (size_t i = 0; i < ckpt.entries.size(); ++i) {
    const CheckpointEntry& e = ckpt.entries[i];
    ParamT<T>& p = *params.items()[i];
    if (e.name != p.name)
      fail(Errc::size_mismatch,
           "checkpoint tensor '" + e.name + "' where model expects '" + p.name + "'");
    if (e.dtype != dtype_name<T>())
      fail(Errc::size_mismatch, "checkpoint dtype " + e.dtype + " for '" + e.name +
                                    "', model expects " + dtype_name<T>());
    if (e.shape != p.value.shape)
      fail(Errc::size_mismatch, "checkpoint shape mismatch for '" + e.name + "'");
    const uint8_t* raw = e.raw.data();
    for (int64_t j = 0; j < p.value.numel(); ++j)
      p.value[j] = unpack_value<T>(raw + static_cast<size_t>(j) * sizeof(T));
  }
}

template std::vector<CheckpointEntry> pack_params<float>(const ParamStoreT<float>&);
template std::vector<CheckpointEntry> pack_params<double>(const ParamStoreT<double>&);
template void unpack_params<float>(const Checkpoint&, ParamStoreT<float>&);
template void unpack_params<double>(const Checkpoint&, ParamStoreT<double>&);

}  // namespace mvdet
