// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvdet/tape.hpp"

namespace mvdet {

// Versioned model container: "MVCKPT 1" magic, the effective run config as an
// embedded text block, then every parameter tensor by name. Values are stored
// as raw IEEE-754 bit patterns (little-endian), so save/load round-trips are
// exact and identical runs produce byte-identical files.
struct CheckpointEntry {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  std::vector<int> shape;
  std::vector<uint8_t> raw;  // packed little-endian values
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Pack a parameter store into entries (in store order) / restore values into
// an existing store. Restore demands an exact match of names, dtype, and
// shapes and errors otherwise.
template <class T>
std::vector<CheckpointEntry> pack_params(const ParamStoreT<T>& params);
template <class T>
void unpack_params(const Checkpoint& ckpt, ParamStoreT<T>& params);

}  // namespace mvdet
