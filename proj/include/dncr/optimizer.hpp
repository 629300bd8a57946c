// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dncr/dnc.hpp"

namespace dncr {

// RMSProp with global gradient-norm clipping.
class RmsProp {
public:
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-10;
  double clip_norm = 50.0;

  explicit RmsProp(const DncConfig& cfg) : acc_(DncParams::zeros(cfg)) {}

  void apply(DncParams& params, DncParams grads);

  DncParams& accumulator() { return acc_; }
  const DncParams& accumulator() const { return acc_; }

private:
  DncParams acc_;
};

inline void RmsProp::apply(DncParams& params, DncParams grads) {
  double sq = 0.0;
  for (auto& [name, g] : grads.tensors()) sq += g->squaredNorm();
  double norm = std::sqrt(sq);
  if (clip_norm > 0.0 && norm > clip_norm) {
    double s = clip_norm / norm;
    for (auto& [name, g] : grads.tensors()) *g *= s;
  }
  auto ps = params.tensors();
  auto gs = grads.tensors();
  auto as = acc_.tensors();
  for (size_t i = 0; i < ps.size(); ++i) {
    MatrixXd& p = *ps[i].second;
    const MatrixXd& g = *gs[i].second;
    MatrixXd& a = *as[i].second;
    a = decay * a + (1.0 - decay) * g.cwiseProduct(g);
    p.array() -= learning_rate * g.array() / (a.array().sqrt() + epsilon);
  }
}

}  // namespace dncr
