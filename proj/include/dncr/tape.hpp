// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace dncr::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense matrices. Vectors are n x 1, scalars 1 x 1.
// Nodes are created in evaluation order; backward() replays them in reverse,
// accumulating into the gradient of every node that influenced the seed.

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
public:
  Var leaf(Mat value);
  const Mat& val(Var v) const { return nodes_[v.idx].value; }
  // Gradient of a node after backward(); zero matrix if it was never reached.
  Mat grad_of(Var v) const;

  // Seeds d(seed)/d(seed) = 1 (seed must be 1x1) and runs the tape backward.
  void backward(Var seed);

  void accum(Var v, const Mat& g);
  size_t size() const { return nodes_.size(); }

  Var make(Mat value, std::function<void(Tape&, const Mat&)> back);
  const Mat& grad_ref(Var v) const { return nodes_[v.idx].grad; }

private:
  struct Node {
    Mat value;
    Mat grad;  // empty until first accumulation
    std::function<void(Tape&, const Mat&)> back;
  };
  std::vector<Node> nodes_;
};

// --- arithmetic -----------------------------------------------------------
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);   // elementwise
Var cdiv(Tape& t, Var a, Var b);  // elementwise
Var add_scalar(Tape& t, Var a, double c);
Var scale_const(Tape& t, Var a, double c);
Var one_minus(Tape& t, Var a);
// C = op(A) * op(B) with optional transposes.
Var matmul(Tape& t, Var a, Var b, bool ta = false, bool tb = false);
Var transpose(Tape& t, Var a);
// Broadcast multiply by a 1x1 scalar node.
Var scale(Tape& t, Var a, Var s);
Var sum(Tape& t, Var a);  // 1x1

// --- nonlinearities -------------------------------------------------------
Var sigmoid(Tape& t, Var a);
Var tanh_(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var oneplus(Tape& t, Var a);  // 1 + softplus, for addressing strengths
Var softmax(Tape& t, Var a);      // column vector
Var log_softmax(Tape& t, Var a);  // column vector, numerically stable

// --- structure ------------------------------------------------------------
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var slice_rows(Tape& t, Var a, int row0, int nrows);
Var pick(Tape& t, Var a, int row);  // single element of a column vector
Var gather_rows(Tape& t, Var a, std::vector<int> idx);
Var zero_diag(Tape& t, Var a);

// --- specialties ----------------------------------------------------------
// out_j = prod_{i<j} x_i (out_0 = 1); used by the allocation weighting.
Var exclusive_cumprod(Tape& t, Var a);
// Row-wise L2 norms of a matrix; gradient is zero for (near-)zero rows.
Var row_norms(Tape& t, Var a);

}  // namespace dncr::ad
