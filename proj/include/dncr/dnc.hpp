// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dncr/encoding.hpp"
#include "dncr/tape.hpp"

namespace dncr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DncConfig {
  int memory_rows = 256;  // N
  int word_size = 64;     // W
  int read_heads = 4;     // R
  int hidden = 256;       // controller LSTM size
  int input_size = kTokenWidth;
  int truck_classes_ = 0;  // T_max + 2
  int dest_classes_ = 0;   // N_max + 2

  int controller_input() const { return input_size + read_heads * word_size; }
  int interface_width() const {
    return word_size * (read_heads + 3) + 5 * read_heads + 3;
  }
  int output_width() const { return truck_classes_ + dest_classes_; }
  void check() const;

  bool operator==(const DncConfig&) const = default;
};

// All trainable tensors. Also reused as a gradient / optimizer accumulator
// container of matching shapes.
struct DncParams {
  MatrixXd lstm_wx;   // 4H x controller_input
  MatrixXd lstm_wh;   // 4H x H
  MatrixXd lstm_b;    // 4H x 1
  MatrixXd iface_w;   // interface_width x H
  MatrixXd iface_b;   // interface_width x 1
  MatrixXd out_w;     // output_width x H
  MatrixXd out_b;     // output_width x 1
  MatrixXd read_out_w;  // output_width x R*W

  static DncParams zeros(const DncConfig& cfg);
  static DncParams init(const DncConfig& cfg, uint64_t seed);

  // Tensors in checkpoint declaration order.
  std::vector<std::pair<std::string, MatrixXd*>> tensors();
  std::vector<std::pair<std::string, const MatrixXd*>> tensors() const;
};

struct DncState {
  MatrixXd memory;               // N x W
  VectorXd usage;                // N
  MatrixXd link;                 // N x N temporal link matrix
  VectorXd precedence;           // N
  VectorXd write_weighting;      // N
  std::vector<VectorXd> read_weightings;  // R of N
  std::vector<VectorXd> read_vectors;     // R of W
  VectorXd hidden;               // H
  VectorXd cell;                 // H
  VectorXd readonly_mask;        // N, entries 0 or 1

  static DncState initial(const DncConfig& cfg);
};

// Controller memory instructions after squashing, unpacked from the raw
// interface emission.
struct InterfaceVector {
  std::vector<VectorXd> read_keys;      // R of W
  VectorXd read_strengths;              // R, each >= 1
  VectorXd write_key;                   // W
  double write_strength = 1.0;          // >= 1
  VectorXd erase;                       // W, in (0,1)
  VectorXd write_vec;                   // W
  VectorXd free_gates;                  // R, in (0,1)
  double alloc_gate = 0.0;              // (0,1)
  double write_gate = 0.0;              // (0,1)
  std::vector<VectorXd> read_modes;     // R of 3-way simplexes
};

InterfaceVector squash_interface(const VectorXd& raw, const DncConfig& cfg);

// Softmax over scaled cosine similarity between key and memory rows.
// mask, when given, removes rows from the distribution.
VectorXd content_addressing(const MatrixXd& memory, const VectorXd& key, double strength,
                            const VectorXd* mask = nullptr);

// Returns (new usage, allocation weighting). Read-only rows have usage
// pinned to 1 and receive no allocation.
std::pair<VectorXd, VectorXd> update_usage_and_allocate(const DncState& state,
                                                        const VectorXd& free_gates);

// Usage update, allocation, write weighting, then the memory / precedence /
// temporal-link updates. Mutates usage, memory, write_weighting, link,
// precedence.
void write_step(DncState& state, const InterfaceVector& iface);

// Low-level memory update for a given write weighting (test hook).
void apply_write(DncState& state, const VectorXd& write_weighting, const VectorXd& erase,
                 const VectorXd& write_vec);

// Forward/backward/content reads; mutates read_weightings and read_vectors.
void read_step(DncState& state, const InterfaceVector& iface);

void freeze_readonly(DncState& state, int row0, int nrows);

// Throws on any weighting/usage/link invariant violation beyond tol.
void check_state_invariants(const DncState& state, double tol = 1e-9);

struct FreezeSpec {
  int after_step = 0;  // engage the mask once this many steps have run
  int rows = 0;        // freeze rows [0, rows)
};

struct EpisodeOptions {
  bool compute_grads = false;
  bool want_input_grads = false;
  std::optional<FreezeSpec> freeze;
};

struct EpisodeResult {
  double loss = 0.0;
  int loss_steps = 0;                  // targets that contributed
  std::vector<StepLogits> all_logits;  // one per time step
  std::vector<StepLogits> scored_logits;  // solve steps from solve_start on
  DncParams grads;                     // valid when compute_grads
  std::vector<VectorXd> input_grads;   // per token, when want_input_grads
};

class DncModel {
public:
  DncModel(DncConfig cfg, DncParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.check();
  }
  static DncModel random(const DncConfig& cfg, uint64_t seed) {
    return DncModel(cfg, DncParams::init(cfg, seed));
  }

  const DncConfig& config() const { return cfg_; }
  DncParams& params() { return params_; }
  const DncParams& params() const { return params_; }

  // One time step through the same computation graph used for training.
  StepLogits step(DncState& state, const InputToken& token) const;

  // Full episode unroll. Loss is the mean over target-carrying steps of the
  // summed truck/destination cross-entropies; gradients flow through every
  // memory operation. Throws NumericError at the first non-finite step.
  EpisodeResult episode(const EncodedEpisode& ep, const EpisodeOptions& opts = {}) const;

private:
  DncConfig cfg_;
  DncParams params_;
};

}  // namespace dncr
