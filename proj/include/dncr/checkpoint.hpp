// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

#include "dncr/dnc.hpp"

namespace dncr {

// Versioned binary checkpoint: magic "DNCR", format version, config fields
// as fixed-width little-endian integers, then each parameter tensor in
// declaration order with a (rows, cols) shape prefix and little-endian
// double payload. Round-trips bit-exactly.

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const DncConfig& cfg, const DncParams& params);

struct Checkpoint {
  DncConfig config;
  DncParams params;
};

Checkpoint load_checkpoint(const std::string& path);

// Raw tensor-list helpers, reused by the optimizer-state sidecar.
void write_tensors(std::ostream& os, const DncParams& params);
void read_tensors(std::istream& is, DncParams& params);

}  // namespace dncr
