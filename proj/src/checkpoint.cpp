// SPDX-License-Identifier: Apache-2.0
#include "dncr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dncr/errors.hpp"

namespace dncr {

namespace {

const char kMagic[4] = {'D', 'N', 'C', 'R'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw MalformedError("truncated checkpoint");
  return uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 | uint32_t{b[3]} << 24;
}

void put_doubles(std::ostream& os, const double* data, size_t count) {
  static_assert(sizeof(double) == 8);
  // Little-endian hosts only; asserted at load time via the magic order.
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void get_doubles(std::istream& is, double* data, size_t count) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  if (!is) throw MalformedError("truncated checkpoint tensor data");
}

}  // namespace

void write_tensors(std::ostream& os, const DncParams& params) {
  auto ts = params.tensors();
  put_u32(os, static_cast<uint32_t>(ts.size()));
  for (auto& [name, m] : ts) {
    put_u32(os, static_cast<uint32_t>(m->rows()));
    put_u32(os, static_cast<uint32_t>(m->cols()));
    put_doubles(os, m->data(), static_cast<size_t>(m->size()));
  }
}

void read_tensors(std::istream& is, DncParams& params) {
  auto ts = params.tensors();
  uint32_t count = get_u32(is);
  if (count != ts.size()) throw MalformedError("checkpoint tensor count mismatch");
  for (auto& [name, m] : ts) {
    uint32_t rows = get_u32(is);
    uint32_t cols = get_u32(is);
    if (rows != static_cast<uint32_t>(m->rows()) || cols != static_cast<uint32_t>(m->cols()))
      throw MalformedError("checkpoint tensor shape mismatch for " + name);
    get_doubles(is, m->data(), static_cast<size_t>(m->size()));
  }
}

void save_checkpoint(const std::string& path, const DncConfig& cfg, const DncParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<uint32_t>(cfg.memory_rows));
  put_u32(os, static_cast<uint32_t>(cfg.word_size));
  put_u32(os, static_cast<uint32_t>(cfg.read_heads));
  put_u32(os, static_cast<uint32_t>(cfg.hidden));
  put_u32(os, static_cast<uint32_t>(cfg.input_size));
  put_u32(os, static_cast<uint32_t>(cfg.truck_classes_));
  put_u32(os, static_cast<uint32_t>(cfg.dest_classes_));
  write_tensors(os, params);
  if (!os) throw ConfigError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw MalformedError("not a DNCR checkpoint: " + path);
  uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw MalformedError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config.memory_rows = static_cast<int>(get_u32(is));
  ck.config.word_size = static_cast<int>(get_u32(is));
  ck.config.read_heads = static_cast<int>(get_u32(is));
  ck.config.hidden = static_cast<int>(get_u32(is));
  ck.config.input_size = static_cast<int>(get_u32(is));
  ck.config.truck_classes_ = static_cast<int>(get_u32(is));
  ck.config.dest_classes_ = static_cast<int>(get_u32(is));
  ck.config.check();
  ck.params = DncParams::zeros(ck.config);
  read_tensors(is, ck.params);
  return ck;
}

}  // namespace dncr
