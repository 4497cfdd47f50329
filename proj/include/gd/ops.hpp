#pragma once

#include <memory>
#include <vector>

#include "gd/rng.hpp"
#include "gd/tensor.hpp"

// Differentiable operator set. All ops validate shapes (std::invalid_argument
// reports both sides) and record the reverse rule on the tape when any input
// requires grad.
//
// Broadcasting for add/mul: shapes must be equal, or one operand's shape
// must be a trailing suffix of the other's (a [d] bias over [n,d] rows, a
// scalar over anything). Reductions in the backward pass mirror the tiling.

namespace gd {

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] @ [k,n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x @ w + b
// Contraction of the last axis with w: [..., c] x [c, m] -> [..., m].
Tensor channel_project(const Tensor& x, const Tensor& w);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int end);
Tensor transpose(const Tensor& x);  // swaps the last two axes
Tensor sum(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);  // scalar
Tensor reshape(const Tensor& x, Shape shape);

// Divides each row (last axis) by its L1 norm; rows of norm 0 stay 0.
Tensor l1_row_normalize(const Tensor& x);

// Subtracts each row's maximum, treating the maximum as a constant. Intended
// for logits that feed exp + l1_row_normalize, which is invariant to per-row
// shifts, so the pass-through gradient is the true one.
Tensor sub_row_max(const Tensor& x);

// Row-normalized sigmoid-gated softmax:
//   l1_row_normalize(exp(content - rowmax) * sigmoid(pos) * mask),
// fused into one node. pos and mask may be null (gate resp. mask dropped);
// mask entries are 0/1 and masked slots get exactly zero weight. The row max
// is treated as a constant, exact by shift invariance of the normalization.
Tensor gated_softmax(const Tensor& content, const Tensor* pos, const Tensor* mask);

// Batch norm over channels (last axis); statistics are taken across all
// leading-dim slots, or across the slots where *slot_mask is nonzero. The
// affine transform applies to every slot either way. In training mode the
// running stats tensors are updated in place (biased variance, momentum 0.1
// by default); in eval mode they are the statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, Real momentum = 0.1, Real eps = 1e-5,
                  const std::vector<std::uint8_t>* slot_mask = nullptr);

// Per-row normalization over the last axis with affine parameters.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = 1e-5);

// Inverted dropout: scales kept entries by 1/(1-p) in training mode, identity
// otherwise. p == 0 draws nothing from the rng.
Tensor dropout(const Tensor& x, Real p, bool training, Rng& rng);

// Mean negative log-likelihood of labels under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor gather_rows(const Tensor& x, std::vector<int> indices);

// Stacks equal-shaped tensors along a new trailing axis.
Tensor stack_last(const std::vector<Tensor>& parts);

// Diagonal slots of a [n,n,c] tensor as [n,c].
Tensor take_diag_slots(const Tensor& e);

// Sparse-by-dense product A @ x where A has the given pattern and `values`
// as its nonzeros (row-major edge order). Differentiable in both values
// and x.
Tensor spmm(std::shared_ptr<const SparseRowMatrix> pattern, const Tensor& values, const Tensor& x);

// L1 normalization of a flat value vector over contiguous segments
// (compressed-row offsets); zero-sum segments stay zero.
Tensor segment_l1_normalize(const Tensor& values, std::vector<std::int64_t> offsets);

}  // namespace gd
