#include "gd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace gd {

namespace {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// C[m,n] += A[m,k] @ B[k,n]
void mm_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        Real* crow = c + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const Real av = arow[l];
            if (av == 0.0) continue;
            const Real* brow = b + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] @ B[k,n]^T
void mm_acc_nt(const Real* a, const Real* b, Real* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * n;
        Real* crow = c + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            const Real* brow = b + static_cast<size_t>(l) * n;
            Real dot = 0.0;
            for (int j = 0; j < n; ++j) dot += arow[j] * brow[j];
            crow[l] += dot;
        }
    }
}

// C[k,n] += A[m,k]^T @ B[m,n]
void mm_acc_tn(const Real* a, const Real* b, Real* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<size_t>(i) * k;
        const Real* brow = b + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const Real av = arow[l];
            if (av == 0.0) continue;
            Real* crow = c + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Broadcast layout for binary elementwise ops: the smaller operand's shape
// must be a trailing suffix of the larger's, so index i of the result maps to
// i % smaller.numel() on the smaller side.
struct BroadcastPlan {
    bool a_small = false;  // a is the tiled operand
    std::int64_t period = 0;
};

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto is_suffix = [](const Shape& small, const Shape& big) {
        if (small.size() > big.size()) return false;
        return std::equal(small.rbegin(), small.rend(), big.rbegin());
    };
    BroadcastPlan p;
    if (sa == sb) {
        p.period = a.numel();
        return p;
    }
    if (is_suffix(sb, sa)) {
        p.a_small = false;
        p.period = b.numel();
        return p;
    }
    if (is_suffix(sa, sb)) {
        p.a_small = true;
        p.period = a.numel();
        return p;
    }
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(sa) +
                                " and " + shape_str(sb));
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out = s;
    out.erase(out.begin() + axis);
    return out;
}

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw std::invalid_argument(std::string(op) + ": axis out of range");
    return axis;
}

void add_to(std::vector<Real>& dst, const std::vector<Real>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2,
          "matmul: expected rank-2 tensors, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
    check(a.dim(1) == b.dim(0),
          "matmul: inner dims differ, " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<Real> out(static_cast<size_t>(m) * n, 0.0);
    mm_acc(a.value().data(), b.value().data(), out.data(), m, k, n);
    return make_op_node({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad)
            mm_acc_nt(self.grad.data(), pb->value.data(), pa->ensure_grad().data(), m, n, k);
        if (pb->requires_grad)
            mm_acc_tn(pa->value.data(), self.grad.data(), pb->ensure_grad().data(), m, k, n);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0),
          "linear: " + shape_str(x.shape()) + " @ " + shape_str(w.shape()));
    check(b.rank() == 1 && b.dim(0) == w.dim(1),
          "linear: bias " + shape_str(b.shape()) + " for output width " +
              std::to_string(w.dim(1)));
    const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
    std::vector<Real> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        std::memcpy(out.data() + static_cast<size_t>(i) * n, b.value().data(), n * sizeof(Real));
    mm_acc(x.value().data(), w.value().data(), out.data(), m, k, n);
    return make_op_node({m, n}, std::move(out), {x, w, b}, [m, k, n](detail::Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad)
            mm_acc_nt(self.grad.data(), pw->value.data(), px->ensure_grad().data(), m, n, k);
        if (pw->requires_grad)
            mm_acc_tn(px->value.data(), self.grad.data(), pw->ensure_grad().data(), m, k, n);
        if (pb->requires_grad) {
            auto& db = pb->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const Real* g = self.grad.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) db[j] += g[j];
            }
        }
    });
}

Tensor channel_project(const Tensor& x, const Tensor& w) {
    check(x.rank() >= 1 && w.rank() == 2 && x.dim(x.rank() - 1) == w.dim(0),
          "channel_project: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const int k = w.dim(0), n = w.dim(1);
    const std::int64_t rows = x.numel() / k;
    Shape out_shape = x.shape();
    out_shape.back() = n;
    std::vector<Real> out(rows * n, 0.0);
    mm_acc(x.value().data(), w.value().data(), out.data(), static_cast<int>(rows), k, n);
    return make_op_node(std::move(out_shape), std::move(out), {x, w},
                        [rows, k, n](detail::Node& self) {
                            auto& px = self.parents[0];
                            auto& pw = self.parents[1];
                            if (px->requires_grad)
                                mm_acc_nt(self.grad.data(), pw->value.data(),
                                          px->ensure_grad().data(), static_cast<int>(rows), n, k);
                            if (pw->requires_grad)
                                mm_acc_tn(px->value.data(), self.grad.data(),
                                          pw->ensure_grad().data(), static_cast<int>(rows), k, n);
                        });
}

namespace {

enum class EwKind { Add, Mul };

template <class Op>
void ew_forward(const Real* big, const Real* small, Real* out, std::int64_t total,
                std::int64_t period, bool a_small, Op op) {
    if (period == total) {
        for (std::int64_t i = 0; i < total; ++i)
            out[i] = a_small ? op(small[i], big[i]) : op(big[i], small[i]);
        return;
    }
    for (std::int64_t base = 0; base < total; base += period)
        for (std::int64_t j = 0; j < period; ++j)
            out[base + j] =
                a_small ? op(small[j], big[base + j]) : op(big[base + j], small[j]);
}

Tensor elementwise_binary(const Tensor& a, const Tensor& b, EwKind kind, const char* name) {
    const BroadcastPlan plan = broadcast_plan(a, b, name);
    const Tensor& big = plan.a_small ? b : a;
    const Tensor& small = plan.a_small ? a : b;
    const std::int64_t total = big.numel();
    const std::int64_t period = plan.period;
    std::vector<Real> out(total);
    if (kind == EwKind::Add)
        ew_forward(big.value().data(), small.value().data(), out.data(), total, period,
                   plan.a_small, [](Real x, Real y) { return x + y; });
    else
        ew_forward(big.value().data(), small.value().data(), out.data(), total, period,
                   plan.a_small, [](Real x, Real y) { return x * y; });
    const bool a_small = plan.a_small;
    return make_op_node(
        big.shape(), std::move(out), {a, b},
        [kind, a_small, period, total](detail::Node& self) {
            detail::Node* pbig = a_small ? self.parents[1].get() : self.parents[0].get();
            detail::Node* psmall = a_small ? self.parents[0].get() : self.parents[1].get();
            const auto& g = self.grad;
            if (pbig->requires_grad) {
                auto& d = pbig->ensure_grad();
                if (kind == EwKind::Mul) {
                    const auto& sv = psmall->value;
                    for (std::int64_t base = 0; base < total; base += period)
                        for (std::int64_t j = 0; j < period; ++j)
                            d[base + j] += g[base + j] * sv[j];
                } else {
                    for (std::int64_t i = 0; i < total; ++i) d[i] += g[i];
                }
            }
            if (psmall->requires_grad) {
                auto& d = psmall->ensure_grad();
                if (kind == EwKind::Mul) {
                    const auto& bv = pbig->value;
                    for (std::int64_t base = 0; base < total; base += period)
                        for (std::int64_t j = 0; j < period; ++j)
                            d[j] += g[base + j] * bv[base + j];
                } else {
                    for (std::int64_t base = 0; base < total; base += period)
                        for (std::int64_t j = 0; j < period; ++j) d[j] += g[base + j];
                }
            }
        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, EwKind::Add, "add"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, EwKind::Mul, "mul"); }

Tensor scale(const Tensor& a, Real s) {
    std::vector<Real> out(a.numel());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a.value()[i] * s;
    return make_op_node(a.shape(), std::move(out), {a}, [s](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * s;
    });
}

Tensor relu(const Tensor& x) {
    std::vector<Real> out(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
    return make_op_node(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (size_t i = 0; i < d.size(); ++i)
            if (p->value[i] > 0.0) d[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<Real> out(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real v = x.value()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return make_op_node(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (size_t i = 0; i < d.size(); ++i) {
            const Real y = self.value[i];
            d[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor exp(const Tensor& x) {
    std::vector<Real> out(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x.value()[i]);
    return make_op_node(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * self.value[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const int rank = parts.front().rank();
    axis = normalize_axis(axis, rank, "concat");
    Shape out_shape = parts.front().shape();
    int axis_total = 0;
    for (const auto& t : parts) {
        check(t.rank() == rank, "concat: rank mismatch");
        for (int d = 0; d < rank; ++d)
            check(d == axis || t.shape()[d] == out_shape[d],
                  "concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                      shape_str(out_shape) + " on axis " + std::to_string(d));
        axis_total += t.dim(axis);
    }
    out_shape[axis] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    std::vector<Real> out(shape_numel(out_shape));
    std::vector<std::int64_t> blocks(parts.size());  // per-part chunk length per outer index
    for (size_t p = 0; p < parts.size(); ++p) blocks[p] = parts[p].dim(axis) * inner;
    const std::int64_t out_block = axis_total * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
        Real* dst = out.data() + o * out_block;
        for (size_t p = 0; p < parts.size(); ++p) {
            const Real* src = parts[p].value().data() + o * blocks[p];
            std::memcpy(dst, src, blocks[p] * sizeof(Real));
            dst += blocks[p];
        }
    }
    return make_op_node(std::move(out_shape), std::move(out), parts,
                        [outer, out_block, blocks](detail::Node& self) {
                            for (std::int64_t o = 0; o < outer; ++o) {
                                const Real* g = self.grad.data() + o * out_block;
                                for (size_t p = 0; p < self.parents.size(); ++p) {
                                    auto& par = self.parents[p];
                                    if (par->requires_grad) {
                                        Real* dst = par->ensure_grad().data() + o * blocks[p];
                                        for (std::int64_t i = 0; i < blocks[p]; ++i) dst[i] += g[i];
                                    }
                                    g += blocks[p];
                                }
                            }
                        });
}

Tensor slice(const Tensor& x, int axis, int start, int end) {
    axis = normalize_axis(axis, x.rank(), "slice");
    check(0 <= start && start < end && end <= x.dim(axis),
          "slice: range [" + std::to_string(start) + "," + std::to_string(end) +
              ") invalid for axis of size " + std::to_string(x.dim(axis)));
    Shape out_shape = x.shape();
    out_shape[axis] = end - start;
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    const std::int64_t in_block = static_cast<std::int64_t>(x.dim(axis)) * inner;
    const std::int64_t out_block = static_cast<std::int64_t>(end - start) * inner;

    std::vector<Real> out(shape_numel(out_shape));
    for (std::int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * out_block, x.value().data() + o * in_block + start * inner,
                    out_block * sizeof(Real));
    return make_op_node(std::move(out_shape), std::move(out), {x},
                        [outer, inner, in_block, out_block, start](detail::Node& self) {
                            auto& p = self.parents[0];
                            if (!p->requires_grad) return;
                            auto& d = p->ensure_grad();
                            for (std::int64_t o = 0; o < outer; ++o) {
                                Real* dst = d.data() + o * in_block + start * inner;
                                const Real* g = self.grad.data() + o * out_block;
                                for (std::int64_t i = 0; i < out_block; ++i) dst[i] += g[i];
                            }
                        });
}

namespace {
void transpose_2d(const Real* src, Real* dst, int r, int c) {
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j) * r + i] = src[static_cast<size_t>(i) * c + j];
}
}  // namespace

Tensor transpose(const Tensor& x) {
    check(x.rank() >= 2, "transpose: needs rank >= 2, got " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    const int r = out_shape[x.rank() - 2], c = out_shape[x.rank() - 1];
    std::swap(out_shape[x.rank() - 2], out_shape[x.rank() - 1]);
    const std::int64_t slab = static_cast<std::int64_t>(r) * c;
    const std::int64_t batches = x.numel() / slab;
    std::vector<Real> out(x.numel());
    for (std::int64_t b = 0; b < batches; ++b)
        transpose_2d(x.value().data() + b * slab, out.data() + b * slab, r, c);
    return make_op_node(std::move(out_shape), std::move(out), {x},
                        [r, c, slab, batches](detail::Node& self) {
                            auto& p = self.parents[0];
                            if (!p->requires_grad) return;
                            auto& d = p->ensure_grad();
                            std::vector<Real> tmp(slab);
                            for (std::int64_t b = 0; b < batches; ++b) {
                                transpose_2d(self.grad.data() + b * slab, tmp.data(), c, r);
                                Real* dst = d.data() + b * slab;
                                for (std::int64_t i = 0; i < slab; ++i) dst[i] += tmp[i];
                            }
                        });
}

Tensor sum(const Tensor& x, int axis) {
    axis = normalize_axis(axis, x.rank(), "sum");
    std::int64_t outer = 1, inner = 1;
    const int ax = x.dim(axis);
    for (int d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    Shape out_shape = drop_axis(x.shape(), axis);
    std::vector<Real> out(outer * inner, 0.0);
    for (std::int64_t o = 0; o < outer; ++o)
        for (int a = 0; a < ax; ++a) {
            const Real* src = x.value().data() + (o * ax + a) * inner;
            Real* dst = out.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    return make_op_node(std::move(out_shape), std::move(out), {x},
                        [outer, inner, ax](detail::Node& self) {
                            auto& p = self.parents[0];
                            if (!p->requires_grad) return;
                            auto& d = p->ensure_grad();
                            for (std::int64_t o = 0; o < outer; ++o)
                                for (int a = 0; a < ax; ++a) {
                                    Real* dst = d.data() + (o * ax + a) * inner;
                                    const Real* g = self.grad.data() + o * inner;
                                    for (std::int64_t i = 0; i < inner; ++i) dst[i] += g[i];
                                }
                        });
}

Tensor sum_all(const Tensor& x) {
    Real s = 0.0;
    for (Real v : x.value()) s += v;
    return make_op_node({}, {s}, {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    check(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    std::vector<Real> out = x.value();
    return make_op_node(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (p->requires_grad) add_to(p->ensure_grad(), self.grad);
    });
}

Tensor l1_row_normalize(const Tensor& x) {
    check(x.rank() >= 1, "l1_row_normalize: needs rank >= 1");
    const std::int64_t cols = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / cols;
    std::vector<Real> out(x.numel());
    std::vector<Real> norms(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* src = x.value().data() + r * cols;
        Real s = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) s += std::fabs(src[j]);
        norms[r] = s;
        Real* dst = out.data() + r * cols;
        if (s > 0.0)
            for (std::int64_t j = 0; j < cols; ++j) dst[j] = src[j] / s;
        else
            for (std::int64_t j = 0; j < cols; ++j) dst[j] = 0.0;
    }
    return make_op_node(x.shape(), std::move(out), {x},
                        [rows, cols, norms = std::move(norms)](detail::Node& self) {
                            auto& p = self.parents[0];
                            if (!p->requires_grad) return;
                            auto& d = p->ensure_grad();
                            for (std::int64_t r = 0; r < rows; ++r) {
                                const Real s = norms[r];
                                if (s <= 0.0) continue;
                                const Real* g = self.grad.data() + r * cols;
                                const Real* y = self.value.data() + r * cols;
                                const Real* xv = p->value.data() + r * cols;
                                Real* dst = d.data() + r * cols;
                                Real gy = 0.0;
                                for (std::int64_t j = 0; j < cols; ++j) gy += g[j] * y[j];
                                for (std::int64_t j = 0; j < cols; ++j) {
                                    const Real sg = xv[j] > 0.0 ? 1.0 : xv[j] < 0.0 ? -1.0 : 0.0;
                                    dst[j] += (g[j] - sg * gy) / s;
                                }
                            }
                        });
}

Tensor sub_row_max(const Tensor& x) {
    check(x.rank() >= 1, "sub_row_max: needs rank >= 1");
    const std::int64_t cols = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / cols;
    std::vector<Real> out(x.numel());
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* src = x.value().data() + r * cols;
        Real m = src[0];
        for (std::int64_t j = 1; j < cols; ++j) m = std::max(m, src[j]);
        Real* dst = out.data() + r * cols;
        for (std::int64_t j = 0; j < cols; ++j) dst[j] = src[j] - m;
    }
    return make_op_node(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        auto& p = self.parents[0];
        if (p->requires_grad) add_to(p->ensure_grad(), self.grad);
    });
}

Tensor gated_softmax(const Tensor& content, const Tensor* pos, const Tensor* mask) {
    check(content.rank() >= 1, "gated_softmax: needs rank >= 1");
    if (pos)
        check(pos->shape() == content.shape(), "gated_softmax: pos shape " +
                                                   shape_str(pos->shape()) + " vs content " +
                                                   shape_str(content.shape()));
    if (mask)
        check(mask->shape() == content.shape(), "gated_softmax: mask shape " +
                                                    shape_str(mask->shape()) + " vs content " +
                                                    shape_str(content.shape()));
    const std::int64_t cols = content.dim(content.rank() - 1);
    const std::int64_t rows = content.numel() / cols;

    std::vector<Real> out(content.numel());
    std::vector<Real> sigma;
    if (pos) {
        sigma.resize(content.numel());
        for (std::int64_t i = 0; i < content.numel(); ++i) {
            const Real v = pos->value()[i];
            sigma[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        }
    }
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* c = content.value().data() + r * cols;
        Real* o = out.data() + r * cols;
        Real m = c[0];
        for (std::int64_t j = 1; j < cols; ++j) m = std::max(m, c[j]);
        Real s = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            Real w = std::exp(c[j] - m);
            if (pos) w *= sigma[r * cols + j];
            if (mask) w *= mask->value()[r * cols + j];
            o[j] = w;
            s += w;
        }
        if (s > 0.0)
            for (std::int64_t j = 0; j < cols; ++j) o[j] /= s;
    }

    std::vector<Tensor> inputs = {content};
    if (pos) inputs.push_back(*pos);
    return make_op_node(content.shape(), std::move(out), std::move(inputs),
                        [rows, cols, sigma = std::move(sigma)](detail::Node& self) {
                            auto& pc = self.parents[0];
                            detail::Node* pp =
                                self.parents.size() > 1 ? self.parents[1].get() : nullptr;
                            for (std::int64_t r = 0; r < rows; ++r) {
                                const Real* g = self.grad.data() + r * cols;
                                const Real* att = self.value.data() + r * cols;
                                Real gy = 0.0;
                                for (std::int64_t j = 0; j < cols; ++j) gy += g[j] * att[j];
                                if (pc->requires_grad) {
                                    Real* d = pc->ensure_grad().data() + r * cols;
                                    for (std::int64_t j = 0; j < cols; ++j)
                                        d[j] += (g[j] - gy) * att[j];
                                }
                                if (pp && pp->requires_grad) {
                                    Real* d = pp->ensure_grad().data() + r * cols;
                                    const Real* sg = sigma.data() + r * cols;
                                    for (std::int64_t j = 0; j < cols; ++j)
                                        d[j] += (g[j] - gy) * att[j] * (1.0 - sg[j]);
                                }
                            }
                        });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, Real momentum, Real eps,
                  const std::vector<std::uint8_t>* slot_mask) {
    check(x.rank() >= 1, "batch_norm: needs rank >= 1");
    const std::int64_t C = x.dim(x.rank() - 1);
    const std::int64_t slots = x.numel() / C;
    check(gamma.numel() == C && beta.numel() == C && running_mean.numel() == C &&
              running_var.numel() == C,
          "batch_norm: parameter size mismatch for " + std::to_string(C) + " channels");
    check(!slot_mask || static_cast<std::int64_t>(slot_mask->size()) == slots,
          "batch_norm: slot mask size mismatch");

    std::vector<Real> mean(C), var(C);
    if (training) {
        std::int64_t m_count = 0;
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::int64_t s = 0; s < slots; ++s) {
            if (slot_mask && !(*slot_mask)[s]) continue;
            ++m_count;
            const Real* row = x.value().data() + s * C;
            for (std::int64_t c = 0; c < C; ++c) mean[c] += row[c];
        }
        check(m_count > 0, "batch_norm: no slots selected for statistics");
        for (std::int64_t c = 0; c < C; ++c) mean[c] /= m_count;
        for (std::int64_t s = 0; s < slots; ++s) {
            if (slot_mask && !(*slot_mask)[s]) continue;
            const Real* row = x.value().data() + s * C;
            for (std::int64_t c = 0; c < C; ++c) {
                const Real d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        for (std::int64_t c = 0; c < C; ++c) var[c] /= m_count;
        auto& rm = running_mean.mutable_value();
        auto& rv = running_var.mutable_value();
        for (std::int64_t c = 0; c < C; ++c) {
            rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
            rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c];
        }
    } else {
        mean = running_mean.value();
        var = running_var.value();
    }

    std::vector<Real> inv_std(C), xhat(x.numel());
    for (std::int64_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    std::vector<Real> out(x.numel());
    for (std::int64_t s = 0; s < slots; ++s) {
        const Real* row = x.value().data() + s * C;
        Real* h = xhat.data() + s * C;
        Real* o = out.data() + s * C;
        for (std::int64_t c = 0; c < C; ++c) {
            h[c] = (row[c] - mean[c]) * inv_std[c];
            o[c] = gamma.value()[c] * h[c] + beta.value()[c];
        }
    }

    std::vector<std::uint8_t> mask_copy;
    if (slot_mask) mask_copy = *slot_mask;
    std::int64_t m_count = slots;
    if (slot_mask) {
        m_count = 0;
        for (auto b : *slot_mask) m_count += b ? 1 : 0;
    }

    return make_op_node(
        x.shape(), std::move(out), {x, gamma, beta},
        [slots, C, training, m_count, inv_std = std::move(inv_std), xhat = std::move(xhat),
         mask = std::move(mask_copy)](detail::Node& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const auto& g = self.grad;
            const auto& gamma_v = pg->value;

            if (pg->requires_grad || pb->requires_grad) {
                std::vector<Real> dg(C, 0.0), db(C, 0.0);
                for (std::int64_t s = 0; s < slots; ++s)
                    for (std::int64_t c = 0; c < C; ++c) {
                        dg[c] += g[s * C + c] * xhat[s * C + c];
                        db[c] += g[s * C + c];
                    }
                if (pg->requires_grad) {
                    auto& d = pg->ensure_grad();
                    for (std::int64_t c = 0; c < C; ++c) d[c] += dg[c];
                }
                if (pb->requires_grad) {
                    auto& d = pb->ensure_grad();
                    for (std::int64_t c = 0; c < C; ++c) d[c] += db[c];
                }
            }
            if (!px->requires_grad) return;
            auto& dx = px->ensure_grad();

            if (!training) {
                for (std::int64_t s = 0; s < slots; ++s)
                    for (std::int64_t c = 0; c < C; ++c)
                        dx[s * C + c] += g[s * C + c] * gamma_v[c] * inv_std[c];
                return;
            }
            // Training: statistics depend on the selected slots. Every slot's
            // output depends on (mean, var), but only selected slots feed them.
            std::vector<Real> s1(C, 0.0), s2(C, 0.0);
            for (std::int64_t s = 0; s < slots; ++s)
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real gh = g[s * C + c] * gamma_v[c];
                    s1[c] += gh;
                    s2[c] += gh * xhat[s * C + c];
                }
            for (std::int64_t s = 0; s < slots; ++s) {
                const bool in_stats = mask.empty() || mask[s];
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real gh = g[s * C + c] * gamma_v[c];
                    Real v = gh;
                    if (in_stats) v -= (s1[c] + xhat[s * C + c] * s2[c]) / m_count;
                    dx[s * C + c] += v * inv_std[c];
                }
            }
        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
    check(x.rank() >= 1, "layer_norm: needs rank >= 1");
    const std::int64_t C = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / C;
    check(gamma.numel() == C && beta.numel() == C, "layer_norm: parameter size mismatch");
    std::vector<Real> out(x.numel()), xhat(x.numel()), inv_std(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* row = x.value().data() + r * C;
        Real mu = 0.0;
        for (std::int64_t c = 0; c < C; ++c) mu += row[c];
        mu /= C;
        Real v = 0.0;
        for (std::int64_t c = 0; c < C; ++c) v += (row[c] - mu) * (row[c] - mu);
        v /= C;
        const Real is = 1.0 / std::sqrt(v + eps);
        inv_std[r] = is;
        for (std::int64_t c = 0; c < C; ++c) {
            xhat[r * C + c] = (row[c] - mu) * is;
            out[r * C + c] = gamma.value()[c] * xhat[r * C + c] + beta.value()[c];
        }
    }
    return make_op_node(
        x.shape(), std::move(out), {x, gamma, beta},
        [rows, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
            auto& px = self.parents[0];
            auto& pg = self.parents[1];
            auto& pb = self.parents[2];
            const auto& g = self.grad;
            if (pg->requires_grad || pb->requires_grad) {
                std::vector<Real> dg(C, 0.0), db(C, 0.0);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < C; ++c) {
                        dg[c] += g[r * C + c] * xhat[r * C + c];
                        db[c] += g[r * C + c];
                    }
                if (pg->requires_grad) add_to(pg->ensure_grad(), dg);
                if (pb->requires_grad) add_to(pb->ensure_grad(), db);
            }
            if (!px->requires_grad) return;
            auto& dx = px->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                Real m1 = 0.0, m2 = 0.0;
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real gh = g[r * C + c] * pg->value[c];
                    m1 += gh;
                    m2 += gh * xhat[r * C + c];
                }
                m1 /= C;
                m2 /= C;
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real gh = g[r * C + c] * pg->value[c];
                    dx[r * C + c] += (gh - m1 - xhat[r * C + c] * m2) * inv_std[r];
                }
            }
        });
}

Tensor dropout(const Tensor& x, Real p, bool training, Rng& rng) {
    check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const Real inv_keep = 1.0 / (1.0 - p);
    std::vector<std::uint8_t> keep(x.numel());
    std::vector<Real> out(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        keep[i] = rng.next_double() >= p;
        out[i] = keep[i] ? x.value()[i] * inv_keep : 0.0;
    }
    return make_op_node(x.shape(), std::move(out), {x},
                        [keep = std::move(keep), inv_keep](detail::Node& self) {
                            auto& px = self.parents[0];
                            if (!px->requires_grad) return;
                            auto& d = px->ensure_grad();
                            for (size_t i = 0; i < d.size(); ++i)
                                if (keep[i]) d[i] += self.grad[i] * inv_keep;
                        });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check(logits.rank() == 2, "cross_entropy: logits must be [n, classes], got " +
                                  shape_str(logits.shape()));
    const std::int64_t n = logits.dim(0), C = logits.dim(1);
    check(static_cast<std::int64_t>(labels.size()) == n,
          "cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
              " rows");
    for (int y : labels)
        check(0 <= y && y < C, "cross_entropy: label " + std::to_string(y) + " out of range");

    std::vector<Real> probs(logits.numel());
    Real loss = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        const Real* row = logits.value().data() + r * C;
        Real m = row[0];
        for (std::int64_t c = 1; c < C; ++c) m = std::max(m, row[c]);
        Real z = 0.0;
        for (std::int64_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
        const Real logz = std::log(z) + m;
        loss += logz - row[labels[r]];
        Real* pr = probs.data() + r * C;
        for (std::int64_t c = 0; c < C; ++c) pr[c] = std::exp(row[c] - logz);
    }
    loss /= static_cast<Real>(n);
    return make_op_node({}, {loss}, {logits},
                        [n, C, labels, probs = std::move(probs)](detail::Node& self) {
                            auto& px = self.parents[0];
                            if (!px->requires_grad) return;
                            auto& d = px->ensure_grad();
                            const Real g = self.grad[0] / static_cast<Real>(n);
                            for (std::int64_t r = 0; r < n; ++r) {
                                const Real* pr = probs.data() + r * C;
                                Real* dst = d.data() + r * C;
                                for (std::int64_t c = 0; c < C; ++c) dst[c] += g * pr[c];
                                dst[labels[r]] -= g;
                            }
                        });
}

Tensor gather_rows(const Tensor& x, std::vector<int> indices) {
    check(x.rank() == 2, "gather_rows: expected [n, d], got " + shape_str(x.shape()));
    const int n = x.dim(0), d = x.dim(1);
    for (int i : indices)
        check(0 <= i && i < n, "gather_rows: index " + std::to_string(i) + " out of range");
    const int m = static_cast<int>(indices.size());
    std::vector<Real> out(static_cast<size_t>(m) * d);
    for (int r = 0; r < m; ++r)
        std::memcpy(out.data() + static_cast<size_t>(r) * d,
                    x.value().data() + static_cast<size_t>(indices[r]) * d, d * sizeof(Real));
    return make_op_node({m, d}, std::move(out), {x},
                        [d, indices = std::move(indices)](detail::Node& self) {
                            auto& px = self.parents[0];
                            if (!px->requires_grad) return;
                            auto& dst = px->ensure_grad();
                            for (size_t r = 0; r < indices.size(); ++r) {
                                const Real* g = self.grad.data() + r * d;
                                Real* row = dst.data() + static_cast<size_t>(indices[r]) * d;
                                for (int c = 0; c < d; ++c) row[c] += g[c];
                            }
                        });
}

Tensor stack_last(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "stack_last: no inputs");
    const Shape base = parts.front().shape();
    for (const auto& t : parts)
        check(t.shape() == base, "stack_last: shape mismatch " + shape_str(t.shape()) + " vs " +
                                     shape_str(base));
    const int k = static_cast<int>(parts.size());
    const std::int64_t slots = parts.front().numel();
    Shape out_shape = base;
    out_shape.push_back(k);
    std::vector<Real> out(slots * k);
    for (int t = 0; t < k; ++t) {
        const auto& v = parts[t].value();
        for (std::int64_t s = 0; s < slots; ++s) out[s * k + t] = v[s];
    }
    return make_op_node(std::move(out_shape), std::move(out), parts, [slots, k](detail::Node& self) {
        for (int t = 0; t < k; ++t) {
            auto& p = self.parents[t];
            if (!p->requires_grad) continue;
            auto& d = p->ensure_grad();
            for (std::int64_t s = 0; s < slots; ++s) d[s] += self.grad[s * k + t];
        }
    });
}

Tensor take_diag_slots(const Tensor& e) {
    check(e.rank() == 3 && e.dim(0) == e.dim(1),
          "take_diag_slots: expected [n,n,c], got " + shape_str(e.shape()));
    const int n = e.dim(0), c = e.dim(2);
    std::vector<Real> out(static_cast<size_t>(n) * c);
    for (int i = 0; i < n; ++i)
        std::memcpy(out.data() + static_cast<size_t>(i) * c,
                    e.value().data() + (static_cast<size_t>(i) * n + i) * c, c * sizeof(Real));
    return make_op_node({n, c}, std::move(out), {e}, [n, c](detail::Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& d = p->ensure_grad();
        for (int i = 0; i < n; ++i) {
            const Real* g = self.grad.data() + static_cast<size_t>(i) * c;
            Real* dst = d.data() + (static_cast<size_t>(i) * n + i) * c;
            for (int j = 0; j < c; ++j) dst[j] += g[j];
        }
    });
}

Tensor spmm(std::shared_ptr<const SparseRowMatrix> pattern, const Tensor& values, const Tensor& x) {
    check(pattern != nullptr, "spmm: null pattern");
    check(values.rank() == 1 && values.numel() == pattern->nnz(),
          "spmm: values shape " + shape_str(values.shape()) + " does not match nnz " +
              std::to_string(pattern->nnz()));
    check(x.rank() == 2 && x.dim(0) == pattern->num_cols,
          "spmm: dense shape " + shape_str(x.shape()) + " does not match " +
              std::to_string(pattern->num_cols) + " columns");
    const int rows = pattern->num_rows, m = x.dim(1);
    std::vector<Real> out(static_cast<size_t>(rows) * m, 0.0);
    for (int i = 0; i < rows; ++i) {
        Real* dst = out.data() + static_cast<size_t>(i) * m;
        for (auto e = pattern->row_begin(i); e < pattern->row_end(i); ++e) {
            const Real w = values.value()[e];
            const Real* src = x.value().data() + static_cast<size_t>(pattern->col_indices[e]) * m;
            for (int j = 0; j < m; ++j) dst[j] += w * src[j];
        }
    }
    return make_op_node({rows, m}, std::move(out), {values, x},
                        [pattern = std::move(pattern), rows, m](detail::Node& self) {
                            auto& pv = self.parents[0];
                            auto& px = self.parents[1];
                            for (int i = 0; i < rows; ++i) {
                                const Real* g = self.grad.data() + static_cast<size_t>(i) * m;
                                for (auto e = pattern->row_begin(i); e < pattern->row_end(i); ++e) {
                                    const int l = pattern->col_indices[e];
                                    if (pv->requires_grad) {
                                        const Real* src = px->value.data() + static_cast<size_t>(l) * m;
                                        Real dot = 0.0;
                                        for (int j = 0; j < m; ++j) dot += g[j] * src[j];
                                        pv->ensure_grad()[e] += dot;
                                    }
                                    if (px->requires_grad) {
                                        Real* dst = px->ensure_grad().data() + static_cast<size_t>(l) * m;
                                        const Real w = pv->value[e];
                                        for (int j = 0; j < m; ++j) dst[j] += w * g[j];
                                    }
                                }
                            }
                        });
}

Tensor segment_l1_normalize(const Tensor& values, std::vector<std::int64_t> offsets) {
    check(values.rank() == 1, "segment_l1_normalize: expected flat values");
    check(!offsets.empty() && offsets.back() == values.numel(),
          "segment_l1_normalize: offsets do not cover the values");
    const size_t segs = offsets.size() - 1;
    std::vector<Real> out(values.numel());
    std::vector<Real> norms(segs);
    for (size_t r = 0; r < segs; ++r) {
        Real s = 0.0;
        for (auto i = offsets[r]; i < offsets[r + 1]; ++i) s += std::fabs(values.value()[i]);
        norms[r] = s;
        for (auto i = offsets[r]; i < offsets[r + 1]; ++i)
            out[i] = s > 0.0 ? values.value()[i] / s : 0.0;
    }
    return make_op_node(values.shape(), std::move(out), {values},
                        [offsets = std::move(offsets), norms = std::move(norms)](detail::Node& self) {
                            auto& p = self.parents[0];
                            if (!p->requires_grad) return;
                            auto& d = p->ensure_grad();
                            for (size_t r = 0; r + 1 < offsets.size(); ++r) {
                                const Real s = norms[r];
                                if (s <= 0.0) continue;
                                Real gy = 0.0;
                                for (auto i = offsets[r]; i < offsets[r + 1]; ++i)
                                    gy += self.grad[i] * self.value[i];
                                for (auto i = offsets[r]; i < offsets[r + 1]; ++i) {
                                    const Real xv = p->value[i];
                                    const Real sg = xv > 0.0 ? 1.0 : xv < 0.0 ? -1.0 : 0.0;
                                    d[i] += (self.grad[i] - sg * gy) / s;
                                }
                            }
                        });
}

}  // namespace gd
