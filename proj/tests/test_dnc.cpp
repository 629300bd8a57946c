// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "dncr/dnc.hpp"
#include "dncr/errors.hpp"

using namespace dncr;

namespace {

DncConfig small_config() {
  DncConfig cfg;
  cfg.memory_rows = 8;
  cfg.word_size = 5;
  cfg.read_heads = 2;
  cfg.hidden = 12;
  cfg.truck_classes_ = 4;
  cfg.dest_classes_ = 7;
  return cfg;
}

InterfaceVector neutral_iface(const DncConfig& cfg) {
  InterfaceVector f;
  for (int r = 0; r < cfg.read_heads; ++r) {
    f.read_keys.push_back(VectorXd::Zero(cfg.word_size));
    VectorXd m(3);
    m << 0, 1, 0;  // pure content
    f.read_modes.push_back(m);
  }
  f.read_strengths = VectorXd::Ones(cfg.read_heads);
  f.write_key = VectorXd::Zero(cfg.word_size);
  f.write_strength = 1.0;
  f.erase = VectorXd::Ones(cfg.word_size);
  f.write_vec = VectorXd::Zero(cfg.word_size);
  f.free_gates = VectorXd::Zero(cfg.read_heads);
  f.alloc_gate = 1.0;
  f.write_gate = 1.0;
  return f;
}

InputToken random_token(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  InputToken t;
  t.v_i = std::floor(u(rng) * 9);
  t.v_j = std::floor(u(rng) * 9);
  t.d = u(rng);
  t.v_k = std::floor(u(rng) * 9);
  t.cost_k = u(rng);
  t.m_l = std::floor(u(rng) * 4);
  t.cap_l = u(rng);
  int stage = static_cast<int>(u(rng) * 3);
  t.data = stage == 0;
  t.task = stage == 1;
  t.solve = stage == 2;
  return t;
}

}  // namespace

TEST_CASE("content addressing hand values") {
  MatrixXd m = MatrixXd::Identity(2, 2);
  VectorXd key(2);
  key << 1, 0;
  auto w = content_addressing(m, key, 1.0);
  CHECK(w[0] == doctest::Approx(0.7310585786).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.2689414214).epsilon(1e-4));
  CHECK(w.sum() == doctest::Approx(1.0));

  // A hot strength concentrates all mass on the matching row.
  auto sharp = content_addressing(m, key, 100.0);
  CHECK(sharp[0] > 0.999);
}

TEST_CASE("content addressing is uniform over identical rows") {
  MatrixXd m = MatrixXd::Ones(6, 4);
  VectorXd key = VectorXd::Ones(4);
  auto w = content_addressing(m, key, 10.0);
  for (int i = 0; i < 6; ++i) CHECK(w[i] == doctest::Approx(1.0 / 6).epsilon(1e-9));

  // All-zero memory rows must not blow up the cosine denominator.
  auto z = content_addressing(MatrixXd::Zero(4, 3), VectorXd::Ones(3), 5.0);
  CHECK(z.sum() == doctest::Approx(1.0));
  for (int i = 0; i < 4; ++i) CHECK(z[i] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("content addressing honors a row mask") {
  MatrixXd m = MatrixXd::Identity(3, 3);
  VectorXd key(3);
  key << 1, 0, 0;
  VectorXd mask(3);
  mask << 0, 1, 1;  // row 0 excluded even though it matches the key
  auto w = content_addressing(m, key, 10.0, &mask);
  CHECK(w[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(w.sum() == doctest::Approx(1.0));
}

TEST_CASE("usage update and allocation against a direct recomputation") {
  auto cfg = small_config();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    DncState s = DncState::initial(cfg);
    for (int i = 0; i < cfg.memory_rows; ++i) s.usage[i] = u(rng);
    VectorXd w = VectorXd::NullaryExpr(cfg.memory_rows, [&](int) { return u(rng); });
    s.write_weighting = w / (w.sum() * (1.0 + u(rng)));
    for (auto& rw : s.read_weightings) {
      VectorXd v = VectorXd::NullaryExpr(cfg.memory_rows, [&](int) { return u(rng); });
      rw = v / (v.sum() * (1.0 + u(rng)));
    }
    VectorXd free = VectorXd::NullaryExpr(cfg.read_heads, [&](int) { return u(rng); });

    auto [usage, alloc] = update_usage_and_allocate(s, free);

    VectorXd psi = VectorXd::Ones(cfg.memory_rows);
    for (int r = 0; r < cfg.read_heads; ++r)
      psi = psi.cwiseProduct(VectorXd::Ones(cfg.memory_rows) - free[r] * s.read_weightings[r]);
    VectorXd expect = (s.usage + s.write_weighting -
                       s.usage.cwiseProduct(s.write_weighting))
                          .cwiseProduct(psi);
    for (int i = 0; i < cfg.memory_rows; ++i)
      CHECK(usage[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    std::vector<int> order(cfg.memory_rows);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return expect[a] < expect[b]; });
    double prod = 1.0;
    VectorXd alloc_expect(cfg.memory_rows);
    for (int j = 0; j < cfg.memory_rows; ++j) {
      alloc_expect[order[j]] = (1.0 - expect[order[j]]) * prod;
      prod *= expect[order[j]];
    }
    for (int i = 0; i < cfg.memory_rows; ++i)
      CHECK(alloc[i] == doctest::Approx(alloc_expect[i]).epsilon(1e-12));
    CHECK(alloc.sum() <= 1.0 + 1e-12);
    CHECK(alloc.minCoeff() >= 0.0);
  }
}

TEST_CASE("allocation targets the least-used row") {
  auto cfg = small_config();
  DncState s = DncState::initial(cfg);
  s.usage.setOnes();
  s.usage[5] = 0.0;
  auto [usage, alloc] = update_usage_and_allocate(s, VectorXd::Zero(cfg.read_heads));
  CHECK(alloc[5] == doctest::Approx(1.0));
  CHECK(alloc.sum() == doctest::Approx(1.0));
  CHECK(usage == s.usage);  // free gates zero, no prior write
}

TEST_CASE("apply_write with full erase replaces a row") {
  auto cfg = small_config();
  DncState s = DncState::initial(cfg);
  s.memory.setConstant(0.5);
  VectorXd w = VectorXd::Zero(cfg.memory_rows);
  w[3] = 1.0;
  VectorXd v(cfg.word_size);
  v << 1, 2, 3, 4, 5;
  apply_write(s, w, VectorXd::Ones(cfg.word_size), v);
  CHECK(s.memory.row(3).transpose() == v);
  CHECK(s.memory(0, 0) == 0.5);
}

TEST_CASE("a closed write gate leaves memory untouched") {
  auto cfg = small_config();
  DncState s = DncState::initial(cfg);
  s.memory.setRandom();
  MatrixXd before = s.memory;
  auto f = neutral_iface(cfg);
  f.write_gate = 0.0;
  f.write_vec.setOnes();
  write_step(s, f);
  CHECK(s.memory == before);
  CHECK(s.write_weighting.cwiseAbs().maxCoeff() == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("sequential writes build the temporal link") {
  auto cfg = small_config();
  DncState s = DncState::initial(cfg);
  s.usage.setOnes();
  s.usage[2] = 0.0;

  auto f = neutral_iface(cfg);
  VectorXd v1(cfg.word_size), v2(cfg.word_size);
  v1 << 1, 0, 0, 0, 0;
  v2 << 0, 1, 0, 0, 0;

  f.write_vec = v1;
  write_step(s, f);
  CHECK(s.write_weighting[2] == doctest::Approx(1.0));
  CHECK(s.memory.row(2).transpose() == v1);
  CHECK(s.precedence[2] == doctest::Approx(1.0));
  CHECK(s.link.cwiseAbs().maxCoeff() == doctest::Approx(0.0).scale(1.0));

  s.usage[5] = 0.0;
  f.write_vec = v2;
  write_step(s, f);
  CHECK(s.write_weighting[5] == doctest::Approx(1.0));
  CHECK(s.memory.row(5).transpose() == v2);
  // The write to row 5 followed the write to row 2.
  CHECK(s.link(5, 2) == doctest::Approx(1.0));
  CHECK(s.link(2, 5) == doctest::Approx(0.0).scale(1.0));
  CHECK(s.link.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK_NOTHROW(check_state_invariants(s));

  // A forward read from row 2 lands on row 5 and retrieves its word.
  auto rf = neutral_iface(cfg);
  s.read_weightings[0].setZero();
  s.read_weightings[0][2] = 1.0;
  rf.read_modes[0] << 0, 0, 1;
  read_step(s, rf);
  CHECK(s.read_weightings[0][5] == doctest::Approx(1.0));
  for (int i = 0; i < cfg.word_size; ++i)
    CHECK(s.read_vectors[0][i] == doctest::Approx(v2[i]).scale(1.0));

  // And a backward read from row 5 lands back on row 2.
  s.read_weightings[1].setZero();
  s.read_weightings[1][5] = 1.0;
  rf.read_modes[1] << 1, 0, 0;
  read_step(s, rf);
  CHECK(s.read_weightings[1][2] == doctest::Approx(1.0));
}

TEST_CASE("interface squashing ranges") {
  auto cfg = small_config();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd raw = VectorXd::NullaryExpr(cfg.interface_width(), [&](int) { return d(rng); });
    auto f = squash_interface(raw, cfg);
    CHECK(static_cast<int>(f.read_keys.size()) == cfg.read_heads);
    CHECK(f.write_strength >= 1.0);
    for (int r = 0; r < cfg.read_heads; ++r) {
      CHECK(f.read_strengths[r] >= 1.0);
      CHECK(f.read_modes[r].sum() == doctest::Approx(1.0));
      CHECK(f.read_modes[r].minCoeff() >= 0.0);
      CHECK(f.free_gates[r] > 0.0);
      CHECK(f.free_gates[r] < 1.0);
    }
    CHECK(f.erase.minCoeff() > 0.0);
    CHECK(f.erase.maxCoeff() < 1.0);
    CHECK(f.alloc_gate > 0.0);
    CHECK(f.alloc_gate < 1.0);
    CHECK(f.write_gate > 0.0);
    CHECK(f.write_gate < 1.0);
  }
}

TEST_CASE("random steps never violate the state invariants") {
  auto cfg = small_config();
  for (uint64_t seed = 0; seed < 4; ++seed) {
    auto model = DncModel::random(cfg, seed);
    DncState s = DncState::initial(cfg);
    std::mt19937_64 rng(seed + 77);
    for (int step = 0; step < 80; ++step) {
      auto logits = model.step(s, random_token(rng));
      CHECK(logits.truck.allFinite());
      CHECK(logits.dest.allFinite());
      CHECK_NOTHROW(check_state_invariants(s, 1e-9));
    }
  }
}

TEST_CASE("stepping is deterministic") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 5);
  std::mt19937_64 rng(1);
  std::vector<InputToken> tokens;
  for (int i = 0; i < 30; ++i) tokens.push_back(random_token(rng));

  DncState a = DncState::initial(cfg);
  DncState b = DncState::initial(cfg);
  for (const auto& tok : tokens) {
    auto la = model.step(a, tok);
    auto lb = model.step(b, tok);
    CHECK(la.truck == lb.truck);
    CHECK(la.dest == lb.dest);
  }
  CHECK(a.memory == b.memory);
  CHECK(a.usage == b.usage);
}

TEST_CASE("episode unroll matches the step API") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 11);
  std::mt19937_64 rng(2);
  EncodedEpisode ep;
  for (int i = 0; i < 25; ++i) ep.tokens.push_back(random_token(rng));
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  ep.solve_start = 20;

  auto res = model.episode(ep);
  REQUIRE(res.all_logits.size() == ep.tokens.size());
  CHECK(res.scored_logits.size() == 5);

  DncState s = DncState::initial(cfg);
  for (size_t i = 0; i < ep.tokens.size(); ++i) {
    auto logits = model.step(s, ep.tokens[i]);
    for (int k = 0; k < logits.truck.size(); ++k)
      CHECK(logits.truck[k] == doctest::Approx(res.all_logits[i].truck[k]).epsilon(1e-12));
    for (int k = 0; k < logits.dest.size(); ++k)
      CHECK(logits.dest[k] == doctest::Approx(res.all_logits[i].dest[k]).epsilon(1e-12));
  }
}

TEST_CASE("episode loss equals the mean summed cross-entropy") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 21);
  std::mt19937_64 rng(4);
  EncodedEpisode ep;
  for (int i = 0; i < 18; ++i) ep.tokens.push_back(random_token(rng));
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  ep.solve_start = 12;
  for (size_t i = 12; i < ep.tokens.size(); ++i)
    ep.targets[i] = TargetStep{static_cast<int>(i % cfg.truck_classes_),
                               static_cast<int>(i % cfg.dest_classes_)};

  auto res = model.episode(ep);
  CHECK(res.loss_steps == 6);

  auto log_softmax = [](const VectorXd& v, int idx) {
    double m = v.maxCoeff();
    return v[idx] - m - std::log((v.array() - m).exp().sum());
  };
  double expect = 0.0;
  for (size_t i = 12; i < ep.tokens.size(); ++i) {
    expect -= log_softmax(res.all_logits[i].truck, ep.targets[i]->truck);
    expect -= log_softmax(res.all_logits[i].dest, ep.targets[i]->dest);
  }
  expect /= 6.0;
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-9));
  CHECK(res.loss > 0.0);
}

TEST_CASE("fully masked episodes carry zero loss and zero gradients") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 31);
  std::mt19937_64 rng(6);
  EncodedEpisode ep;
  for (int i = 0; i < 10; ++i) ep.tokens.push_back(random_token(rng));
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  ep.solve_start = 10;
  EpisodeOptions opts;
  opts.compute_grads = true;
  auto res = model.episode(ep, opts);
  CHECK(res.loss == 0.0);
  CHECK(res.loss_steps == 0);
  for (auto& [name, g] : res.grads.tensors()) CHECK(g->isZero());
}

TEST_CASE("frozen rows stay bit-identical under further writes") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 41);
  std::mt19937_64 rng(8);
  DncState s = DncState::initial(cfg);
  for (int i = 0; i < 15; ++i) model.step(s, random_token(rng));

  const int rows = 3;
  freeze_readonly(s, 0, rows);
  MatrixXd snapshot = s.memory.topRows(rows);
  for (int i = 0; i < 100; ++i) {
    model.step(s, random_token(rng));
    CHECK(s.memory.topRows(rows) == snapshot);
    for (int r = 0; r < rows; ++r) CHECK(s.usage[r] == 1.0);
  }
  // Unfrozen rows keep evolving.
  CHECK(s.memory.bottomRows(cfg.memory_rows - rows).cwiseAbs().sum() > 0.0);
}

TEST_CASE("freezing nothing reproduces the baseline exactly") {
  auto cfg = small_config();
  auto model = DncModel::random(cfg, 51);
  std::mt19937_64 rng(10);
  EncodedEpisode ep;
  for (int i = 0; i < 20; ++i) ep.tokens.push_back(random_token(rng));
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  ep.solve_start = 15;

  auto base = model.episode(ep);
  EpisodeOptions opts;
  opts.freeze = FreezeSpec{10, 0};
  auto frozen = model.episode(ep, opts);
  REQUIRE(base.all_logits.size() == frozen.all_logits.size());
  for (size_t i = 0; i < base.all_logits.size(); ++i) {
    CHECK(base.all_logits[i].truck == frozen.all_logits[i].truck);
    CHECK(base.all_logits[i].dest == frozen.all_logits[i].dest);
  }
}

TEST_CASE("non-finite logits raise a numeric error with the step index") {
  auto cfg = small_config();
  auto params = DncParams::init(cfg, 61);
  params.out_b(0, 0) = std::numeric_limits<double>::quiet_NaN();
  DncModel model(cfg, params);
  std::mt19937_64 rng(12);
  EncodedEpisode ep;
  for (int i = 0; i < 5; ++i) ep.tokens.push_back(random_token(rng));
  ep.targets.assign(ep.tokens.size(), std::nullopt);
  ep.solve_start = 5;
  CHECK_THROWS_AS(model.episode(ep), NumericError);
  try {
    model.episode(ep);
  } catch (const NumericError& e) {
    CHECK(e.step == 0);
  }
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(cfg.check());
  CHECK(cfg.interface_width() == 5 * (2 + 3) + 5 * 2 + 3);
  CHECK(cfg.controller_input() == 10 + 2 * 5);
  CHECK(cfg.output_width() == 11);
  cfg.memory_rows = 0;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
}
