// SPDX-License-Identifier: Apache-2.0
#include "dncr/tape.hpp"

#include <cassert>
#include <cmath>
#include <utility>

namespace dncr::ad {

Var Tape::leaf(Mat value) {
  nodes_.push_back({std::move(value), {}, nullptr});
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(Mat value, std::function<void(Tape&, const Mat&)> back) {
  nodes_.push_back({std::move(value), {}, std::move(back)});
  return {static_cast<int>(nodes_.size()) - 1};
}

Mat Tape::grad_of(Var v) const {
  const Node& n = nodes_[v.idx];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accum(Var v, const Mat& g) {
  Node& n = nodes_[v.idx];
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var seed) {
  assert(nodes_[seed.idx].value.size() == 1);
  accum(seed, Mat::Ones(1, 1));
  for (int i = seed.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n.grad);
  }
}

Var add(Tape& t, Var a, Var b) {
  return t.make(t.val(a) + t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accum(a, g);
    t.accum(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  return t.make(t.val(a) - t.val(b), [a, b](Tape& t, const Mat& g) {
    t.accum(a, g);
    t.accum(b, -g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  return t.make(t.val(a).cwiseProduct(t.val(b)), [a, b](Tape& t, const Mat& g) {
    t.accum(a, g.cwiseProduct(t.val(b)));
    t.accum(b, g.cwiseProduct(t.val(a)));
  });
}

Var cdiv(Tape& t, Var a, Var b) {
  return t.make(t.val(a).cwiseQuotient(t.val(b)), [a, b](Tape& t, const Mat& g) {
    const Mat& bv = t.val(b);
    t.accum(a, g.cwiseQuotient(bv));
    t.accum(b, -g.cwiseProduct(t.val(a)).cwiseQuotient(bv.cwiseProduct(bv)));
  });
}

Var add_scalar(Tape& t, Var a, double c) {
  return t.make((t.val(a).array() + c).matrix(),
                [a](Tape& t, const Mat& g) { t.accum(a, g); });
}

Var scale_const(Tape& t, Var a, double c) {
  return t.make(t.val(a) * c, [a, c](Tape& t, const Mat& g) { t.accum(a, g * c); });
}

Var one_minus(Tape& t, Var a) {
  return t.make((1.0 - t.val(a).array()).matrix(),
                [a](Tape& t, const Mat& g) { t.accum(a, -g); });
}

Var matmul(Tape& t, Var a, Var b, bool ta, bool tb) {
  const Mat& av = t.val(a);
  const Mat& bv = t.val(b);
  Mat out;
  if (!ta && !tb)
    out = av * bv;
  else if (ta && !tb)
    out = av.transpose() * bv;
  else if (!ta && tb)
    out = av * bv.transpose();
  else
    out = av.transpose() * bv.transpose();
  return t.make(std::move(out), [a, b, ta, tb](Tape& t, const Mat& g) {
    const Mat& av = t.val(a);
    const Mat& bv = t.val(b);
    if (!ta)
      t.accum(a, tb ? Mat(g * bv) : Mat(g * bv.transpose()));
    else
      t.accum(a, tb ? Mat(bv.transpose() * g.transpose()) : Mat(bv * g.transpose()));
    if (!tb)
      t.accum(b, ta ? Mat(av * g) : Mat(av.transpose() * g));
    else
      t.accum(b, ta ? Mat(g.transpose() * av.transpose()) : Mat(g.transpose() * av));
  });
}

Var transpose(Tape& t, Var a) {
  return t.make(t.val(a).transpose(),
                [a](Tape& t, const Mat& g) { t.accum(a, g.transpose()); });
}

Var scale(Tape& t, Var a, Var s) {
  double sv = t.val(s)(0, 0);
  return t.make(t.val(a) * sv, [a, s, sv](Tape& t, const Mat& g) {
    t.accum(a, g * sv);
    Mat gs(1, 1);
    gs(0, 0) = g.cwiseProduct(t.val(a)).sum();
    t.accum(s, gs);
  });
}

Var sum(Tape& t, Var a) {
  Mat out(1, 1);
  out(0, 0) = t.val(a).sum();
  return t.make(std::move(out), [a](Tape& t, const Mat& g) {
    t.accum(a, Mat::Constant(t.val(a).rows(), t.val(a).cols(), g(0, 0)));
  });
}

Var sigmoid(Tape& t, Var a) {
  Mat s = (1.0 / (1.0 + (-t.val(a).array()).exp())).matrix();
  return t.make(s, [a, s](Tape& t, const Mat& g) {
    t.accum(a, g.cwiseProduct((s.array() * (1.0 - s.array())).matrix()));
  });
}

Var tanh_(Tape& t, Var a) {
  Mat s = t.val(a).array().tanh().matrix();
  return t.make(s, [a, s](Tape& t, const Mat& g) {
    t.accum(a, g.cwiseProduct((1.0 - s.array().square()).matrix()));
  });
}

Var softplus(Tape& t, Var a) {
  // log(1 + e^x), computed stably for large |x|.
  Mat out = t.val(a).unaryExpr([](double x) {
    return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
  });
  return t.make(out, [a](Tape& t, const Mat& g) {
    Mat s = (1.0 / (1.0 + (-t.val(a).array()).exp())).matrix();
    t.accum(a, g.cwiseProduct(s));
  });
}

Var oneplus(Tape& t, Var a) { return add_scalar(t, softplus(t, a), 1.0); }

Var softmax(Tape& t, Var a) {
  const Mat& x = t.val(a);
  Mat e = (x.array() - x.maxCoeff()).exp().matrix();
  Mat s = e / e.sum();
  return t.make(s, [a, s](Tape& t, const Mat& g) {
    double dot = g.cwiseProduct(s).sum();
    t.accum(a, s.cwiseProduct((g.array() - dot).matrix()));
  });
}

Var log_softmax(Tape& t, Var a) {
  const Mat& x = t.val(a);
  double m = x.maxCoeff();
  double lse = m + std::log((x.array() - m).exp().sum());
  Mat out = (x.array() - lse).matrix();
  return t.make(out, [a, out](Tape& t, const Mat& g) {
    Mat s = out.array().exp().matrix();
    t.accum(a, g - s * g.sum());
  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  int rows = 0;
  int cols = static_cast<int>(t.val(parts[0]).cols());
  for (Var p : parts) rows += static_cast<int>(t.val(p).rows());
  Mat out(rows, cols);
  int r = 0;
  for (Var p : parts) {
    int n = static_cast<int>(t.val(p).rows());
    out.middleRows(r, n) = t.val(p);
    r += n;
  }
  return t.make(std::move(out), [parts](Tape& t, const Mat& g) {
    int r = 0;
    for (Var p : parts) {
      int n = static_cast<int>(t.val(p).rows());
      t.accum(p, g.middleRows(r, n));
      r += n;
    }
  });
}

Var slice_rows(Tape& t, Var a, int row0, int nrows) {
  return t.make(t.val(a).middleRows(row0, nrows), [a, row0, nrows](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    ga.middleRows(row0, nrows) = g;
    t.accum(a, ga);
  });
}

Var pick(Tape& t, Var a, int row) {
  Mat out(1, 1);
  out(0, 0) = t.val(a)(row, 0);
  return t.make(std::move(out), [a, row](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    ga(row, 0) = g(0, 0);
    t.accum(a, ga);
  });
}

Var gather_rows(Tape& t, Var a, std::vector<int> idx) {
  const Mat& av = t.val(a);
  Mat out(static_cast<int>(idx.size()), av.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<int>(i)) = av.row(idx[i]);
  return t.make(std::move(out), [a, idx = std::move(idx)](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    for (size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<int>(i));
    t.accum(a, ga);
  });
}

Var zero_diag(Tape& t, Var a) {
  Mat out = t.val(a);
  out.diagonal().setZero();
  return t.make(std::move(out), [a](Tape& t, const Mat& g) {
    Mat ga = g;
    ga.diagonal().setZero();
    t.accum(a, ga);
  });
}

Var exclusive_cumprod(Tape& t, Var a) {
  const Mat& x = t.val(a);
  const int n = static_cast<int>(x.rows());
  Mat out(n, 1);
  double run = 1.0;
  for (int j = 0; j < n; ++j) {
    out(j, 0) = run;
    run *= x(j, 0);
  }
  return t.make(std::move(out), [a, n](Tape& t, const Mat& g) {
    const Mat& x = t.val(a);
    // prefix[i] = prod_{k<i} x_k
    Eigen::VectorXd prefix(n);
    double run = 1.0;
    for (int i = 0; i < n; ++i) {
      prefix[i] = run;
      run *= x(i, 0);
    }
    Mat ga = Mat::Zero(n, 1);
    for (int i = 0; i < n; ++i) {
      double inner = 1.0;  // prod_{i<k<j} x_k
      for (int j = i + 1; j < n; ++j) {
        ga(i, 0) += g(j, 0) * prefix[i] * inner;
        inner *= x(j, 0);
      }
    }
    t.accum(a, ga);
  });
}

Var row_norms(Tape& t, Var a) {
  const Mat& av = t.val(a);
  Mat out = av.rowwise().norm();
  return t.make(out, [a, out](Tape& t, const Mat& g) {
    const Mat& av = t.val(a);
    Mat ga(av.rows(), av.cols());
    for (int i = 0; i < av.rows(); ++i) {
      double n = out(i, 0);
      if (n < 1e-300)
        ga.row(i).setZero();
      else
        ga.row(i) = (g(i, 0) / n) * av.row(i);
    }
    t.accum(a, ga);
  });
}

}  // namespace dncr::ad
