// SPDX-License-Identifier: Apache-2.0
#include "dncr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dncr/rng.hpp"

namespace dncr {

DncConfig tiny_grad_check_config() {
  DncConfig cfg;
  cfg.memory_rows = 4;
  cfg.word_size = 6;
  cfg.read_heads = 1;
  cfg.hidden = 8;
  cfg.truck_classes_ = 4;
  cfg.dest_classes_ = 5;
  return cfg;
}

namespace {

constexpr int kEpisodeSteps = 6;
constexpr int kMaskedSteps = 3;  // warm-up style prefix without targets

EncodedEpisode random_episode(const DncConfig& cfg, uint64_t seed) {
  auto rng = make_rng(seed, "gradcheck-episode");
  std::uniform_real_distribution<double> value(-0.5, 0.5);
  EncodedEpisode ep;
  for (int s = 0; s < kEpisodeSteps; ++s) {
    InputToken t;
    t.v_i = value(rng);
    t.v_j = value(rng);
    t.d = value(rng);
    t.v_k = value(rng);
    t.cost_k = value(rng);
    t.m_l = value(rng);
    t.cap_l = value(rng);
    t.data = value(rng);
    t.task = value(rng);
    t.solve = value(rng);
    ep.tokens.push_back(t);
  }
  std::uniform_int_distribution<int> truck(0, cfg.truck_classes_ - 1);
  std::uniform_int_distribution<int> dest(0, cfg.dest_classes_ - 1);
  ep.targets.assign(kEpisodeSteps, std::nullopt);
  for (int s = kMaskedSteps; s < kEpisodeSteps; ++s)
    ep.targets[s] = TargetStep{truck(rng), dest(rng)};
  ep.solve_start = kMaskedSteps;
  return ep;
}

double episode_loss(const DncModel& model, const EncodedEpisode& ep) {
  return model.episode(ep).loss;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

}  // namespace

GradCheckResult grad_check_tiny(uint64_t seed, double h, double tol, bool corrupt_gradient) {
  DncConfig cfg = tiny_grad_check_config();
  DncModel model(cfg, DncParams::init(cfg, seed));
  EncodedEpisode ep = random_episode(cfg, seed);

  EpisodeOptions opts;
  opts.compute_grads = true;
  opts.want_input_grads = true;
  EpisodeResult res = model.episode(ep, opts);
  if (corrupt_gradient) res.grads.lstm_wx(0, 0) += 0.5;

  GradCheckResult out;
  auto note = [&](double analytic, double fd) {
    out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic, fd));
  };

  auto grad_ts = res.grads.tensors();
  auto param_ts = model.params().tensors();
  for (size_t t = 0; t < param_ts.size(); ++t) {
    MatrixXd& p = *param_ts[t].second;
    const MatrixXd& g = *grad_ts[t].second;
    for (int i = 0; i < p.size(); ++i) {
      double saved = p.data()[i];
      p.data()[i] = saved + h;
      double up = episode_loss(model, ep);
      p.data()[i] = saved - h;
      double down = episode_loss(model, ep);
      p.data()[i] = saved;
      note(g.data()[i], (up - down) / (2.0 * h));
    }
  }

  for (size_t s = 0; s < ep.tokens.size(); ++s) {
    auto base = ep.tokens[s].values();
    for (int k = 0; k < kTokenWidth; ++k) {
      auto bump = [&](double delta) {
        EncodedEpisode pert = ep;
        InputToken& tok = pert.tokens[s];
        double* fields[kTokenWidth] = {&tok.v_i, &tok.v_j,  &tok.d,    &tok.v_k, &tok.cost_k,
                                       &tok.m_l, &tok.cap_l, &tok.data, &tok.task, &tok.solve};
        *fields[k] = base[k] + delta;
        return episode_loss(model, pert);
      };
      double fd = (bump(h) - bump(-h)) / (2.0 * h);
      note(res.input_grads[s][k], fd);
    }
  }

  out.pass = out.max_rel_err < tol;
  return out;
}

}  // namespace dncr
