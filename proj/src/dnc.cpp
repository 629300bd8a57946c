// SPDX-License-Identifier: Apache-2.0
#include "dncr/dnc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dncr/errors.hpp"
#include "dncr/rng.hpp"

namespace dncr {

namespace {
constexpr double kCosineEps = 1e-6;
constexpr double kMaskPenalty = 1e30;
}  // namespace

void DncConfig::check() const {
  if (memory_rows < 1 || word_size < 1 || read_heads < 1 || hidden < 1)
    throw ConfigError("bad DNC dimensions");
  if (truck_classes_ < 3 || dest_classes_ < 3)
    throw ConfigError("output heads need at least 3 classes");
}

DncParams DncParams::zeros(const DncConfig& cfg) {
  DncParams p;
  int ci = cfg.controller_input();
  int h = cfg.hidden;
  p.lstm_wx = MatrixXd::Zero(4 * h, ci);
  p.lstm_wh = MatrixXd::Zero(4 * h, h);
  p.lstm_b = MatrixXd::Zero(4 * h, 1);
  p.iface_w = MatrixXd::Zero(cfg.interface_width(), h);
  p.iface_b = MatrixXd::Zero(cfg.interface_width(), 1);
  p.out_w = MatrixXd::Zero(cfg.output_width(), h);
  p.out_b = MatrixXd::Zero(cfg.output_width(), 1);
  p.read_out_w = MatrixXd::Zero(cfg.output_width(), cfg.read_heads * cfg.word_size);
  return p;
}

DncParams DncParams::init(const DncConfig& cfg, uint64_t seed) {
  DncParams p = zeros(cfg);
  auto rng = make_rng(seed, "dnc-init");
  auto fill = [&](MatrixXd& m, int fan_in) {
    double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-s, s);
    for (int j = 0; j < m.cols(); ++j)
      for (int i = 0; i < m.rows(); ++i) m(i, j) = d(rng);
  };
  // Orthogonal blocks for the recurrent weights keep signal and gradient
  // magnitudes stable across the long episode unroll.
  auto fill_orthogonal = [&](MatrixXd& m) {
    std::normal_distribution<double> g(0.0, 1.0);
    int h = static_cast<int>(m.cols());
    for (int b = 0; b * h < m.rows(); ++b) {
      MatrixXd a(h, h);
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < h; ++i) a(i, j) = g(rng);
      Eigen::HouseholderQR<MatrixXd> qr(a);
      MatrixXd q = qr.householderQ() * MatrixXd::Identity(h, h);
      MatrixXd r = qr.matrixQR().topRows(h).triangularView<Eigen::Upper>();
      // Fix the sign ambiguity so Q is drawn uniformly (Haar).
      for (int j = 0; j < h; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
      m.block(b * h, 0, h, h) = q;
    }
  };
  fill(p.lstm_wx, cfg.controller_input());
  fill_orthogonal(p.lstm_wh);
  fill(p.iface_w, cfg.hidden);
  fill(p.out_w, cfg.hidden);
  fill(p.read_out_w, cfg.read_heads * cfg.word_size);
  // Rescale token field columns for balanced influence at the start: id
  // fields arrive unnormalized (magnitudes up to the head sizes) and would
  // otherwise dominate, while the normalized value fields (distance, cargo,
  // capacity) carry the information that actually distinguishes instances
  // and would otherwise be drowned out.
  if (cfg.input_size == kTokenWidth) {
    double node_scale = 1.0 / std::max(2, cfg.dest_classes_);
    double truck_scale = 1.0 / std::max(2, cfg.truck_classes_);
    for (int col : {0, 1, 3}) p.lstm_wx.col(col) *= node_scale;
    p.lstm_wx.col(5) *= truck_scale;
    for (int col : {2, 4, 6}) p.lstm_wx.col(col) *= 16.0;
  }
  // Start with the memory pathway live rather than vestigial: stronger
  // interface and read projections give content addressing and the read
  // contribution to the logits usable signal from the first step.
  p.iface_w *= 4.0;
  p.read_out_w *= 4.0;
  // Interface biases (offsets mirror the interface vector layout): sharp
  // read/write strengths so content addressing selects rows instead of
  // averaging the whole memory, an open write gate and allocation-leaning
  // gate so each step logs a clean record to a fresh row, and low free
  // gates so read rows are not immediately recycled.
  {
    int r = cfg.read_heads, w = cfg.word_size;
    int read_strengths = r * w;
    int write_strength = r * w + r + w;
    int free_gates = write_strength + 1 + w + w;
    int alloc_gate = free_gates + r;
    int write_gate = alloc_gate + 1;
    p.iface_b.block(read_strengths, 0, r, 1).setConstant(5.0);
    p.iface_b(write_strength, 0) = 5.0;
    p.iface_b.block(free_gates, 0, r, 1).setConstant(-2.0);
    p.iface_b(alloc_gate, 0) = 2.0;
    p.iface_b(write_gate, 0) = 2.0;
  }
  // Forget gate bias starts open.
  p.lstm_b.block(cfg.hidden, 0, cfg.hidden, 1).setOnes();
  return p;
}

std::vector<std::pair<std::string, MatrixXd*>> DncParams::tensors() {
  return {{"lstm_wx", &lstm_wx}, {"lstm_wh", &lstm_wh}, {"lstm_b", &lstm_b},
          {"iface_w", &iface_w}, {"iface_b", &iface_b}, {"out_w", &out_w},
          {"out_b", &out_b},     {"read_out_w", &read_out_w}};
}

std::vector<std::pair<std::string, const MatrixXd*>> DncParams::tensors() const {
  return {{"lstm_wx", &lstm_wx}, {"lstm_wh", &lstm_wh}, {"lstm_b", &lstm_b},
          {"iface_w", &iface_w}, {"iface_b", &iface_b}, {"out_w", &out_w},
          {"out_b", &out_b},     {"read_out_w", &read_out_w}};
}

DncState DncState::initial(const DncConfig& cfg) {
  DncState s;
  s.memory = MatrixXd::Zero(cfg.memory_rows, cfg.word_size);
  s.usage = VectorXd::Zero(cfg.memory_rows);
  s.link = MatrixXd::Zero(cfg.memory_rows, cfg.memory_rows);
  s.precedence = VectorXd::Zero(cfg.memory_rows);
  s.write_weighting = VectorXd::Zero(cfg.memory_rows);
  s.read_weightings.assign(cfg.read_heads, VectorXd::Zero(cfg.memory_rows));
  s.read_vectors.assign(cfg.read_heads, VectorXd::Zero(cfg.word_size));
  s.hidden = VectorXd::Zero(cfg.hidden);
  s.cell = VectorXd::Zero(cfg.hidden);
  s.readonly_mask = VectorXd::Zero(cfg.memory_rows);
  return s;
}

// ---------------------------------------------------------------------------
// Interface vector layout. Shared by the tape graph and squash_interface.

namespace {

struct IfaceLayout {
  int r, w;
  int read_keys, read_strengths, write_key, write_strength, erase, write_vec;
  int free_gates, alloc_gate, write_gate, read_modes, total;

  explicit IfaceLayout(const DncConfig& cfg) : r(cfg.read_heads), w(cfg.word_size) {
    int off = 0;
    read_keys = off, off += r * w;
    read_strengths = off, off += r;
    write_key = off, off += w;
    write_strength = off, off += 1;
    erase = off, off += w;
    write_vec = off, off += w;
    free_gates = off, off += r;
    alloc_gate = off, off += 1;
    write_gate = off, off += 1;
    read_modes = off, off += 3 * r;
    total = off;
  }
};

double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double oneplus_s(double x) {
  return 1.0 + (x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0))));
}

}  // namespace

InterfaceVector squash_interface(const VectorXd& raw, const DncConfig& cfg) {
  IfaceLayout lay(cfg);
  if (raw.size() != lay.total) throw ConfigError("interface vector width mismatch");
  InterfaceVector v;
  for (int i = 0; i < lay.r; ++i)
    v.read_keys.push_back(raw.segment(lay.read_keys + i * lay.w, lay.w));
  v.read_strengths = raw.segment(lay.read_strengths, lay.r).unaryExpr(&oneplus_s);
  v.write_key = raw.segment(lay.write_key, lay.w);
  v.write_strength = oneplus_s(raw[lay.write_strength]);
  v.erase = raw.segment(lay.erase, lay.w).unaryExpr(&sigmoid_s);
  v.write_vec = raw.segment(lay.write_vec, lay.w);
  v.free_gates = raw.segment(lay.free_gates, lay.r).unaryExpr(&sigmoid_s);
  v.alloc_gate = sigmoid_s(raw[lay.alloc_gate]);
  v.write_gate = sigmoid_s(raw[lay.write_gate]);
  for (int i = 0; i < lay.r; ++i) {
    VectorXd m = raw.segment(lay.read_modes + 3 * i, 3);
    VectorXd e = (m.array() - m.maxCoeff()).exp();
    v.read_modes.push_back(e / e.sum());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Tape graph builders. All DNC math lives here; both the step API and the
// episode unroll run through these.

namespace {

using ad::Tape;
using ad::Var;

struct ParamVars {
  Var lstm_wx, lstm_wh, lstm_b, iface_w, iface_b, out_w, out_b, read_out_w;
};

ParamVars make_param_vars(Tape& t, const DncParams& p) {
  return {t.leaf(p.lstm_wx), t.leaf(p.lstm_wh), t.leaf(p.lstm_b),
          t.leaf(p.iface_w), t.leaf(p.iface_b), t.leaf(p.out_w),
          t.leaf(p.out_b),   t.leaf(p.read_out_w)};
}

struct StateVars {
  Var memory, usage, link, precedence, write_weighting;
  std::vector<Var> read_weightings, read_vectors;
  Var hidden, cell;
};

StateVars make_state_vars(Tape& t, const DncState& s) {
  StateVars v;
  v.memory = t.leaf(s.memory);
  v.usage = t.leaf(s.usage);
  v.link = t.leaf(s.link);
  v.precedence = t.leaf(s.precedence);
  v.write_weighting = t.leaf(s.write_weighting);
  for (const auto& w : s.read_weightings) v.read_weightings.push_back(t.leaf(w));
  for (const auto& r : s.read_vectors) v.read_vectors.push_back(t.leaf(r));
  v.hidden = t.leaf(s.hidden);
  v.cell = t.leaf(s.cell);
  return v;
}

struct IfaceVars {
  std::vector<Var> read_keys;       // W x 1 each
  std::vector<Var> read_strengths;  // 1 x 1 each
  Var write_key, write_strength;
  Var erase, write_vec;
  std::vector<Var> free_gates;  // 1 x 1 each
  Var alloc_gate, write_gate;
  std::vector<Var> read_modes;  // 3 x 1 simplex each
};

IfaceVars parse_interface(Tape& t, Var raw, const DncConfig& cfg) {
  IfaceLayout lay(cfg);
  IfaceVars v;
  for (int i = 0; i < lay.r; ++i)
    v.read_keys.push_back(ad::slice_rows(t, raw, lay.read_keys + i * lay.w, lay.w));
  for (int i = 0; i < lay.r; ++i)
    v.read_strengths.push_back(ad::oneplus(t, ad::pick(t, raw, lay.read_strengths + i)));
  v.write_key = ad::slice_rows(t, raw, lay.write_key, lay.w);
  v.write_strength = ad::oneplus(t, ad::pick(t, raw, lay.write_strength));
  v.erase = ad::sigmoid(t, ad::slice_rows(t, raw, lay.erase, lay.w));
  v.write_vec = ad::slice_rows(t, raw, lay.write_vec, lay.w);
  for (int i = 0; i < lay.r; ++i)
    v.free_gates.push_back(ad::sigmoid(t, ad::pick(t, raw, lay.free_gates + i)));
  v.alloc_gate = ad::sigmoid(t, ad::pick(t, raw, lay.alloc_gate));
  v.write_gate = ad::sigmoid(t, ad::pick(t, raw, lay.write_gate));
  for (int i = 0; i < lay.r; ++i)
    v.read_modes.push_back(ad::softmax(t, ad::slice_rows(t, raw, lay.read_modes + 3 * i, 3)));
  return v;
}

Var content_graph(Tape& t, Var memory, Var key, Var strength, const VectorXd* mask) {
  Var dots = ad::matmul(t, memory, key);  // N x 1
  Var mnorm = ad::row_norms(t, memory);
  Var knorm = ad::row_norms(t, ad::transpose(t, key));  // 1 x 1
  Var denom = ad::add_scalar(t, ad::scale(t, mnorm, knorm), kCosineEps);
  Var scores = ad::scale(t, ad::cdiv(t, dots, denom), strength);
  if (mask) {
    VectorXd penalty = ((1.0 - mask->array()) * -kMaskPenalty).matrix();
    scores = ad::add(t, scores, t.leaf(penalty));
  }
  return ad::softmax(t, scores);
}

// Stable ascending argsort; ties go to the lower row, and the ordering is
// treated as a constant in the backward pass.
std::vector<int> ascending_order(const ad::Mat& u) {
  std::vector<int> idx(u.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return u(a, 0) < u(b, 0); });
  return idx;
}

struct UsageAlloc {
  Var usage, alloc;
};

UsageAlloc usage_alloc_graph(Tape& t, Var usage_prev, Var write_prev,
                             const std::vector<Var>& read_prev,
                             const std::vector<Var>& free_gates,
                             const VectorXd* readonly) {
  Var retention{-1};
  for (size_t r = 0; r < read_prev.size(); ++r) {
    Var term = ad::one_minus(t, ad::scale(t, read_prev[r], free_gates[r]));
    retention = r == 0 ? term : ad::mul(t, retention, term);
  }
  Var inner = ad::sub(t, ad::add(t, usage_prev, write_prev),
                      ad::mul(t, usage_prev, write_prev));
  Var usage = ad::mul(t, inner, retention);
  if (readonly && readonly->maxCoeff() > 0.0) {
    Var keep = ad::mul(t, usage, t.leaf((1.0 - readonly->array()).matrix()));
    usage = ad::add(t, keep, t.leaf(*readonly));
  }
  std::vector<int> order = ascending_order(t.val(usage));
  std::vector<int> inverse(order.size());
  for (size_t j = 0; j < order.size(); ++j) inverse[order[j]] = static_cast<int>(j);
  Var sorted = ad::gather_rows(t, usage, order);
  Var alloc_sorted = ad::mul(t, ad::one_minus(t, sorted), ad::exclusive_cumprod(t, sorted));
  Var alloc = ad::gather_rows(t, alloc_sorted, inverse);
  return {usage, alloc};
}

struct WriteOut {
  Var memory, link, precedence, write_weighting;
};

WriteOut write_graph(Tape& t, Var memory, Var link, Var precedence, Var alloc,
                     const IfaceVars& f, const VectorXd* readonly) {
  Var content = content_graph(t, memory, f.write_key, f.write_strength, nullptr);
  Var mix = ad::add(t, ad::scale(t, alloc, f.alloc_gate),
                    ad::scale(t, content, ad::one_minus(t, f.alloc_gate)));
  Var ww = ad::scale(t, mix, f.write_gate);
  if (readonly && readonly->maxCoeff() > 0.0)
    ww = ad::mul(t, ww, t.leaf((1.0 - readonly->array()).matrix()));

  Var erase_outer = ad::matmul(t, ww, f.erase, false, true);  // N x W
  Var mem = ad::add(t, ad::mul(t, memory, ad::one_minus(t, erase_outer)),
                    ad::matmul(t, ww, f.write_vec, false, true));

  Var prec = ad::add(t, ad::scale(t, precedence, ad::one_minus(t, ad::sum(t, ww))), ww);

  const int n = static_cast<int>(t.val(memory).rows());
  Var ones = t.leaf(ad::Mat::Ones(n, 1));
  Var w_rows = ad::matmul(t, ww, ones, false, true);  // w_i per row
  Var w_cols = ad::matmul(t, ones, ww, false, true);  // w_j per column
  Var decayed = ad::mul(t, ad::one_minus(t, ad::add(t, w_rows, w_cols)), link);
  Var lnk = ad::zero_diag(t, ad::add(t, decayed, ad::matmul(t, ww, precedence, false, true)));

  return {mem, lnk, prec, ww};
}

struct ReadOut {
  std::vector<Var> weightings, vectors;
};

ReadOut read_graph(Tape& t, Var memory, Var link, const std::vector<Var>& read_prev,
                   const IfaceVars& f) {
  ReadOut out;
  for (size_t r = 0; r < read_prev.size(); ++r) {
    Var fwd = ad::matmul(t, link, read_prev[r]);
    Var bwd = ad::matmul(t, link, read_prev[r], true, false);
    Var content = content_graph(t, memory, f.read_keys[r], f.read_strengths[r], nullptr);
    Var w = ad::add(t, ad::add(t, ad::scale(t, bwd, ad::pick(t, f.read_modes[r], 0)),
                               ad::scale(t, content, ad::pick(t, f.read_modes[r], 1))),
                    ad::scale(t, fwd, ad::pick(t, f.read_modes[r], 2)));
    out.weightings.push_back(w);
    out.vectors.push_back(ad::matmul(t, memory, w, true, false));
  }
  return out;
}

struct StepOut {
  Var truck_logits, dest_logits;
};

StepOut step_graph(Tape& t, const DncConfig& cfg, const ParamVars& p, StateVars& s, Var x,
                   const VectorXd* readonly) {
  const int h = cfg.hidden;

  std::vector<Var> in_parts = {x};
  for (Var rv : s.read_vectors) in_parts.push_back(rv);
  Var ctrl_in = ad::concat_rows(t, in_parts);

  Var z = ad::add(t, ad::add(t, ad::matmul(t, p.lstm_wx, ctrl_in),
                             ad::matmul(t, p.lstm_wh, s.hidden)),
                  p.lstm_b);
  Var gi = ad::sigmoid(t, ad::slice_rows(t, z, 0, h));
  Var gf = ad::sigmoid(t, ad::slice_rows(t, z, h, h));
  Var go = ad::sigmoid(t, ad::slice_rows(t, z, 2 * h, h));
  Var gg = ad::tanh_(t, ad::slice_rows(t, z, 3 * h, h));
  Var cell = ad::add(t, ad::mul(t, gf, s.cell), ad::mul(t, gi, gg));
  Var hid = ad::mul(t, go, ad::tanh_(t, cell));
  s.cell = cell;
  s.hidden = hid;

  Var xi = ad::add(t, ad::matmul(t, p.iface_w, hid), p.iface_b);
  Var v = ad::add(t, ad::matmul(t, p.out_w, hid), p.out_b);
  IfaceVars f = parse_interface(t, xi, cfg);

  auto [usage, alloc] = usage_alloc_graph(t, s.usage, s.write_weighting, s.read_weightings,
                                          f.free_gates, readonly);
  WriteOut w = write_graph(t, s.memory, s.link, s.precedence, alloc, f, readonly);
  ReadOut r = read_graph(t, w.memory, w.link, s.read_weightings, f);

  s.usage = usage;
  s.memory = w.memory;
  s.link = w.link;
  s.precedence = w.precedence;
  s.write_weighting = w.write_weighting;
  s.read_weightings = r.weightings;
  s.read_vectors = r.vectors;

  Var y = ad::add(t, v, ad::matmul(t, p.read_out_w, ad::concat_rows(t, r.vectors)));
  return {ad::slice_rows(t, y, 0, cfg.truck_classes_),
          ad::slice_rows(t, y, cfg.truck_classes_, cfg.dest_classes_)};
}

void store_state(Tape& t, const StateVars& v, DncState& s) {
  s.memory = t.val(v.memory);
  s.usage = t.val(v.usage);
  s.link = t.val(v.link);
  s.precedence = t.val(v.precedence);
  s.write_weighting = t.val(v.write_weighting);
  for (size_t r = 0; r < s.read_weightings.size(); ++r) {
    s.read_weightings[r] = t.val(v.read_weightings[r]);
    s.read_vectors[r] = t.val(v.read_vectors[r]);
  }
  s.hidden = t.val(v.hidden);
  s.cell = t.val(v.cell);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public single-shot operations (thin wrappers over the graph builders).

VectorXd content_addressing(const MatrixXd& memory, const VectorXd& key, double strength,
                            const VectorXd* mask) {
  Tape t;
  Var w = content_graph(t, t.leaf(memory), t.leaf(key),
                        t.leaf(ad::Mat::Constant(1, 1, strength)), mask);
  return t.val(w);
}

std::pair<VectorXd, VectorXd> update_usage_and_allocate(const DncState& state,
                                                        const VectorXd& free_gates) {
  Tape t;
  std::vector<Var> read_prev, gates;
  for (const auto& w : state.read_weightings) read_prev.push_back(t.leaf(w));
  for (int r = 0; r < free_gates.size(); ++r)
    gates.push_back(t.leaf(ad::Mat::Constant(1, 1, free_gates[r])));
  const VectorXd* ro = state.readonly_mask.maxCoeff() > 0.0 ? &state.readonly_mask : nullptr;
  auto [u, a] = usage_alloc_graph(t, t.leaf(state.usage), t.leaf(state.write_weighting),
                                  read_prev, gates, ro);
  return {t.val(u), t.val(a)};
}

namespace {

IfaceVars lift_interface(Tape& t, const InterfaceVector& iface) {
  IfaceVars f;
  for (const auto& k : iface.read_keys) f.read_keys.push_back(t.leaf(k));
  for (int r = 0; r < iface.read_strengths.size(); ++r)
    f.read_strengths.push_back(t.leaf(ad::Mat::Constant(1, 1, iface.read_strengths[r])));
  f.write_key = t.leaf(iface.write_key);
  f.write_strength = t.leaf(ad::Mat::Constant(1, 1, iface.write_strength));
  f.erase = t.leaf(iface.erase);
  f.write_vec = t.leaf(iface.write_vec);
  for (int r = 0; r < iface.free_gates.size(); ++r)
    f.free_gates.push_back(t.leaf(ad::Mat::Constant(1, 1, iface.free_gates[r])));
  f.alloc_gate = t.leaf(ad::Mat::Constant(1, 1, iface.alloc_gate));
  f.write_gate = t.leaf(ad::Mat::Constant(1, 1, iface.write_gate));
  for (const auto& m : iface.read_modes) f.read_modes.push_back(t.leaf(m));
  return f;
}

}  // namespace

void write_step(DncState& state, const InterfaceVector& iface) {
  Tape t;
  IfaceVars f = lift_interface(t, iface);
  std::vector<Var> read_prev;
  for (const auto& w : state.read_weightings) read_prev.push_back(t.leaf(w));
  const VectorXd* ro = state.readonly_mask.maxCoeff() > 0.0 ? &state.readonly_mask : nullptr;
  auto [u, a] = usage_alloc_graph(t, t.leaf(state.usage), t.leaf(state.write_weighting),
                                  read_prev, f.free_gates, ro);
  WriteOut w = write_graph(t, t.leaf(state.memory), t.leaf(state.link),
                           t.leaf(state.precedence), a, f, ro);
  state.usage = t.val(u);
  state.memory = t.val(w.memory);
  state.link = t.val(w.link);
  state.precedence = t.val(w.precedence);
  state.write_weighting = t.val(w.write_weighting);
}

void apply_write(DncState& state, const VectorXd& write_weighting, const VectorXd& erase,
                 const VectorXd& write_vec) {
  state.memory = state.memory.cwiseProduct(
                     (1.0 - (write_weighting * erase.transpose()).array()).matrix()) +
                 write_weighting * write_vec.transpose();
  MatrixXd w_rows = write_weighting * MatrixXd::Ones(1, state.link.cols());
  MatrixXd w_cols = w_rows.transpose();
  state.link = (1.0 - w_rows.array() - w_cols.array()).matrix().cwiseProduct(state.link) +
               write_weighting * state.precedence.transpose();
  state.link.diagonal().setZero();
  state.precedence = (1.0 - write_weighting.sum()) * state.precedence + write_weighting;
  state.write_weighting = write_weighting;
}

void read_step(DncState& state, const InterfaceVector& iface) {
  Tape t;
  IfaceVars f = lift_interface(t, iface);
  std::vector<Var> read_prev;
  for (const auto& w : state.read_weightings) read_prev.push_back(t.leaf(w));
  ReadOut r = read_graph(t, t.leaf(state.memory), t.leaf(state.link), read_prev, f);
  for (size_t i = 0; i < state.read_weightings.size(); ++i) {
    state.read_weightings[i] = t.val(r.weightings[i]);
    state.read_vectors[i] = t.val(r.vectors[i]);
  }
}

void freeze_readonly(DncState& state, int row0, int nrows) {
  row0 = std::clamp(row0, 0, static_cast<int>(state.readonly_mask.size()));
  nrows = std::clamp(nrows, 0, static_cast<int>(state.readonly_mask.size()) - row0);
  state.readonly_mask.segment(row0, nrows).setOnes();
}

void check_state_invariants(const DncState& state, double tol) {
  auto check_weighting = [&](const VectorXd& w, const char* name) {
    if (w.minCoeff() < -tol)
      throw NumericError(std::string(name) + " has a negative entry", -1);
    if (w.sum() > 1.0 + tol)
      throw NumericError(std::string(name) + " sums above 1", -1);
  };
  check_weighting(state.write_weighting, "write weighting");
  for (const auto& w : state.read_weightings) check_weighting(w, "read weighting");
  check_weighting(state.precedence, "precedence");
  if (state.usage.minCoeff() < -tol || state.usage.maxCoeff() > 1.0 + tol)
    throw NumericError("usage out of [0,1]", -1);
  if (state.link.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw NumericError("link diagonal not zero", -1);
  if (state.link.minCoeff() < -tol) throw NumericError("link has a negative entry", -1);
  if (state.link.rowwise().sum().maxCoeff() > 1.0 + tol)
    throw NumericError("link row sum above 1", -1);
  if (state.link.colwise().sum().maxCoeff() > 1.0 + tol)
    throw NumericError("link column sum above 1", -1);
  if (!state.memory.allFinite() || !state.hidden.allFinite() || !state.cell.allFinite())
    throw NumericError("non-finite state", -1);
}

// ---------------------------------------------------------------------------

StepLogits DncModel::step(DncState& state, const InputToken& token) const {
  Tape t;
  ParamVars p = make_param_vars(t, params_);
  StateVars s = make_state_vars(t, state);
  const VectorXd* ro = state.readonly_mask.maxCoeff() > 0.0 ? &state.readonly_mask : nullptr;
  StepOut out = step_graph(t, cfg_, p, s, t.leaf(token.vec()), ro);
  store_state(t, s, state);
#ifndef NDEBUG
  check_state_invariants(state, 1e-9);
#endif
  return {t.val(out.truck_logits), t.val(out.dest_logits)};
}

EpisodeResult DncModel::episode(const EncodedEpisode& ep, const EpisodeOptions& opts) const {
  Tape t;
  ParamVars p = make_param_vars(t, params_);
  DncState init = DncState::initial(cfg_);
  StateVars s = make_state_vars(t, init);

  VectorXd frozen = VectorXd::Zero(cfg_.memory_rows);
  bool has_freeze = opts.freeze.has_value() && opts.freeze->rows > 0;

  EpisodeResult result;
  std::vector<Var> inputs;
  std::vector<Var> loss_terms;

  for (size_t step = 0; step < ep.tokens.size(); ++step) {
    const VectorXd* ro = nullptr;
    if (has_freeze && static_cast<int>(step) >= opts.freeze->after_step) {
      if (frozen.maxCoeff() == 0.0)
        frozen.head(std::min(opts.freeze->rows, cfg_.memory_rows)).setOnes();
      ro = &frozen;
    }
    Var x = t.leaf(ep.tokens[step].vec());
    inputs.push_back(x);
    StepOut out = step_graph(t, cfg_, p, s, x, ro);
    StepLogits logits{t.val(out.truck_logits), t.val(out.dest_logits)};
    if (!logits.truck.allFinite() || !logits.dest.allFinite())
      throw NumericError("non-finite logits", static_cast<long>(step));
    result.all_logits.push_back(logits);
    if (ep.targets[step]) {
      Var lt = ad::pick(t, ad::log_softmax(t, out.truck_logits), ep.targets[step]->truck);
      Var ld = ad::pick(t, ad::log_softmax(t, out.dest_logits), ep.targets[step]->dest);
      loss_terms.push_back(ad::add(t, lt, ld));
    }
  }
  for (size_t i = ep.solve_start; i < result.all_logits.size(); ++i)
    result.scored_logits.push_back(result.all_logits[i]);

  result.loss_steps = static_cast<int>(loss_terms.size());
  if (opts.compute_grads) result.grads = DncParams::zeros(cfg_);
  if (opts.want_input_grads)
    result.input_grads.assign(ep.tokens.size(), VectorXd::Zero(cfg_.input_size));
  if (loss_terms.empty()) {
    result.loss = 0.0;
    return result;
  }

  Var total{-1};
  for (size_t i = 0; i < loss_terms.size(); ++i)
    total = i == 0 ? loss_terms[i] : ad::add(t, total, loss_terms[i]);
  Var loss = ad::scale_const(t, total, -1.0 / static_cast<double>(loss_terms.size()));
  result.loss = t.val(loss)(0, 0);
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss", -1);

  if (opts.compute_grads || opts.want_input_grads) {
    t.backward(loss);
    if (opts.compute_grads) {
      result.grads.lstm_wx = t.grad_of(p.lstm_wx);
      result.grads.lstm_wh = t.grad_of(p.lstm_wh);
      result.grads.lstm_b = t.grad_of(p.lstm_b);
      result.grads.iface_w = t.grad_of(p.iface_w);
      result.grads.iface_b = t.grad_of(p.iface_b);
      result.grads.out_w = t.grad_of(p.out_w);
      result.grads.out_b = t.grad_of(p.out_b);
      result.grads.read_out_w = t.grad_of(p.read_out_w);
    }
    if (opts.want_input_grads)
      for (size_t i = 0; i < inputs.size(); ++i) result.input_grads[i] = t.grad_of(inputs[i]);
  }
  return result;
}

}  // namespace dncr
