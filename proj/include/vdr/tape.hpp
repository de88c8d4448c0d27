#pragma once

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "vdr/common.hpp"
#include "vdr/params.hpp"
#include "vdr/tensor.hpp"

namespace vdr {

// Handle into a Tape node.
struct Var {
    int32_t i = -1;
    bool valid() const { return i >= 0; }
};

// Reverse-mode autodiff over dense tensors, templated on the scalar so the
// same model code runs at float for training and at double for the
// finite-difference gradient checks. Nodes are appended in forward order;
// creation order is a topological order, so backward() just walks the node
// list in reverse. All loops are single-stream with a fixed accumulation
// order, which makes every pass bit-deterministic for fixed inputs.
template <typename T>
class Tape {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<Mat>;
    using CMatMap = Eigen::Map<const Mat>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor<T> v, bool requires_grad = false) {
        return make(std::move(v), requires_grad, nullptr);
    }

    // Push a registry parameter as a leaf; repeated pushes of the same
    // parameter return the same node so gradients accumulate in one place.
    Var param(ParamRegistry<T>& reg, int64_t pid) {
        const auto key = std::make_pair(static_cast<const void*>(&reg), pid);
        auto it = param_nodes_.find(key);
        if (it != param_nodes_.end()) return Var{it->second};
        Var v = make(reg.at(pid).value, true, nullptr);
        param_nodes_.emplace(key, v.i);
        param_list_.emplace_back(pid, v.i);
        return v;
    }

    const Tensor<T>& val(Var v) const { return node(v).val; }
    const Tensor<T>& grad(Var v) const {
        if (!node(v).rg) throw UsageError("grad: node does not require gradients");
        return node(v).grad;
    }
    size_t size() const { return nodes_.size(); }

    // Gradients of every parameter pushed via param(), in push order.
    std::vector<std::pair<int64_t, const Tensor<T>*>> param_grads() const {
        std::vector<std::pair<int64_t, const Tensor<T>*>> out;
        out.reserve(param_list_.size());
        for (const auto& [pid, ni] : param_list_)
            out.emplace_back(pid, &nodes_[static_cast<size_t>(ni)].grad);
        return out;
    }

    void backward(Var loss) {
        Node& ln = node(loss);
        if (ln.val.size() != 1) throw UsageError("backward: loss must be scalar");
        if (!ln.rg) throw UsageError("backward: loss does not require gradients");
        ln.grad[0] = T(1);
        for (int32_t i = loss.i; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.rg && n.back) n.back();
        }
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        expect(val(a).same_shape(val(b)), "add: shape mismatch");
        Tensor<T> out = val(a);
        const T* pb = val(b).data();
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
        return binary(std::move(out), a, b, [this](Var a, Var b, Var o) {
            accumulate(a, node(o).grad.data(), T(1));
            accumulate(b, node(o).grad.data(), T(1));
        });
    }

    Var sub(Var a, Var b) {
        expect(val(a).same_shape(val(b)), "sub: shape mismatch");
        Tensor<T> out = val(a);
        const T* pb = val(b).data();
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
        return binary(std::move(out), a, b, [this](Var a, Var b, Var o) {
            accumulate(a, node(o).grad.data(), T(1));
            accumulate(b, node(o).grad.data(), T(-1));
        });
    }

    Var mul(Var a, Var b) {
        expect(val(a).same_shape(val(b)), "mul: shape mismatch");
        Tensor<T> out = val(a);
        const T* pb = val(b).data();
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
        return binary(std::move(out), a, b, [this](Var a, Var b, Var o) {
            const T* g = node(o).grad.data();
            if (node(a).rg) {
                T* da = node(a).grad.data();
                const T* vb = val(b).data();
                for (int64_t i = 0; i < node(o).grad.size(); ++i) da[i] += g[i] * vb[i];
            }
            if (node(b).rg) {
                T* db = node(b).grad.data();
                const T* va = val(a).data();
                for (int64_t i = 0; i < node(o).grad.size(); ++i) db[i] += g[i] * va[i];
            }
        });
    }

    Var scale(Var a, double c) {
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] = static_cast<T>(po[i] * c);
        return unary(std::move(out), a, [this, c](Var a, Var o) {
            accumulate(a, node(o).grad.data(), static_cast<T>(c));
        });
    }

    Var add_scalar(Var a, double c) {
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] = static_cast<T>(po[i] + c);
        return unary(std::move(out), a, [this](Var a, Var o) {
            accumulate(a, node(o).grad.data(), T(1));
        });
    }

    Var silu(Var a) {
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) {
            const double x = po[i];
            po[i] = static_cast<T>(x / (1.0 + std::exp(-x)));
        }
        return unary(std::move(out), a, [this](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            const T* x = val(a).data();
            for (int64_t i = 0; i < val(a).size(); ++i) {
                const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
                da[i] += static_cast<T>(static_cast<double>(g[i]) * s *
                                        (1.0 + static_cast<double>(x[i]) * (1.0 - s)));
            }
        });
    }

    Var gelu(Var a) {
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) {
            const double x = po[i];
            po[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
        }
        return unary(std::move(out), a, [this](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            const T* x = val(a).data();
            for (int64_t i = 0; i < val(a).size(); ++i) {
                const double xi = x[i];
                const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                da[i] += static_cast<T>(static_cast<double>(g[i]) * (cdf + xi * pdf));
            }
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i)
            po[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(po[i]))));
        return unary(std::move(out), a, [this](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            const T* y = val(o).data();
            for (int64_t i = 0; i < val(o).size(); ++i) {
                const double s = y[i];
                da[i] += static_cast<T>(static_cast<double>(g[i]) * s * (1.0 - s));
            }
        });
    }

    // Cut the graph: value passes through, gradients stop here.
    Var detach(Var a) { return input(val(a), false); }

    // ---- shape ----

    Var reshape(Var a, std::vector<int64_t> shape) {
        Tensor<T> out = val(a).reshaped(std::move(shape));
        return unary(std::move(out), a, [this](Var a, Var o) {
            accumulate(a, node(o).grad.data(), T(1));
        });
    }

    // perm[i] = input axis that becomes output axis i.
    Var permute(Var a, std::vector<int64_t> perm) {
        const auto& ishape = val(a).shape();
        const size_t r = ishape.size();
        expect(perm.size() == r, "permute: rank mismatch");
        std::vector<int64_t> oshape(r);
        for (size_t i = 0; i < r; ++i) oshape[i] = ishape[static_cast<size_t>(perm[i])];
        std::vector<int64_t> istride(r, 1);
        for (size_t i = r - 1; i > 0; --i) istride[i - 1] = istride[i] * ishape[i];
        // Stride of the output's i-th axis expressed in input linear offsets.
        std::vector<int64_t> ostride_in(r);
        for (size_t i = 0; i < r; ++i) ostride_in[i] = istride[static_cast<size_t>(perm[i])];
        Tensor<T> out(oshape);
        permute_walk(oshape, ostride_in, [&](int64_t lin, int64_t off) {
            out[lin] = val(a)[off];
        });
        auto os = std::move(oshape);
        auto osi = std::move(ostride_in);
        return unary(std::move(out), a, [this, os, osi](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            permute_walk(os, osi, [&](int64_t lin, int64_t off) { da[off] += g[lin]; });
        });
    }

    // Slice along the last axis: out[..., 0:hi-lo] = in[..., lo:hi].
    Var slice_last(Var a, int64_t lo, int64_t hi) {
        const auto& ishape = val(a).shape();
        const int64_t last = ishape.back();
        expect(0 <= lo && lo < hi && hi <= last, "slice_last: bad range");
        std::vector<int64_t> oshape = ishape;
        oshape.back() = hi - lo;
        const int64_t rows = val(a).size() / last;
        Tensor<T> out(oshape);
        const T* pi = val(a).data();
        T* po = out.data();
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int64_t k = lo; k < hi; ++k) po[rw * (hi - lo) + (k - lo)] = pi[rw * last + k];
        return unary(std::move(out), a, [this, lo, hi, last, rows](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            for (int64_t rw = 0; rw < rows; ++rw)
                for (int64_t k = lo; k < hi; ++k) da[rw * last + k] += g[rw * (hi - lo) + (k - lo)];
        });
    }

    Var concat(Var a, Var b, int64_t axis) {
        const auto& sa = val(a).shape();
        const auto& sb = val(b).shape();
        expect(sa.size() == sb.size(), "concat: rank mismatch");
        const auto ax = static_cast<size_t>(axis);
        for (size_t i = 0; i < sa.size(); ++i)
            expect(i == ax || sa[i] == sb[i], "concat: off-axis dims differ");
        std::vector<int64_t> oshape = sa;
        oshape[ax] += sb[ax];
        int64_t outer = 1, inner = 1;
        for (size_t i = 0; i < ax; ++i) outer *= sa[i];
        for (size_t i = ax + 1; i < sa.size(); ++i) inner *= sa[i];
        const int64_t na = sa[ax] * inner, nb = sb[ax] * inner;
        Tensor<T> out(oshape);
        const T* pa = val(a).data();
        const T* pb = val(b).data();
        T* po = out.data();
        for (int64_t u = 0; u < outer; ++u) {
            std::copy(pa + u * na, pa + (u + 1) * na, po + u * (na + nb));
            std::copy(pb + u * nb, pb + (u + 1) * nb, po + u * (na + nb) + na);
        }
        return binary(std::move(out), a, b, [this, outer, na, nb](Var a, Var b, Var o) {
            const T* g = node(o).grad.data();
            if (node(a).rg) {
                T* da = node(a).grad.data();
                for (int64_t u = 0; u < outer; ++u)
                    for (int64_t k = 0; k < na; ++k) da[u * na + k] += g[u * (na + nb) + k];
            }
            if (node(b).rg) {
                T* db = node(b).grad.data();
                for (int64_t u = 0; u < outer; ++u)
                    for (int64_t k = 0; k < nb; ++k) db[u * nb + k] += g[u * (na + nb) + na + k];
            }
        });
    }

    // ---- broadcast arithmetic over trailing feature axis ----

    // x[rows, k] + v[k] for any leading shape flattened into rows.
    Var add_rows(Var x, Var v) {
        const int64_t k = val(v).size();
        expect(val(v).rank() == 1 && val(x).shape().back() == k, "add_rows: width mismatch");
        Tensor<T> out = val(x);
        const int64_t rows = out.size() / k;
        T* po = out.data();
        const T* pv = val(v).data();
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int64_t j = 0; j < k; ++j) po[rw * k + j] += pv[j];
        return binary(std::move(out), x, v, [this, rows, k](Var x, Var v, Var o) {
            const T* g = node(o).grad.data();
            if (node(x).rg) accumulate(x, g, T(1));
            if (node(v).rg) {
                T* dv = node(v).grad.data();
                for (int64_t rw = 0; rw < rows; ++rw)
                    for (int64_t j = 0; j < k; ++j) dv[j] += g[rw * k + j];
            }
        });
    }

    // y[rows, k] = x[rows, k] * s[k] + t[k]; the AdaLN modulation primitive.
    Var row_affine(Var x, Var s, Var t) {
        const int64_t k = val(x).shape().back();
        expect(val(s).size() == k && val(t).size() == k, "row_affine: width mismatch");
        const int64_t rows = val(x).size() / k;
        Tensor<T> out = val(x);
        T* po = out.data();
        const T* ps = val(s).data();
        const T* pt = val(t).data();
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int64_t j = 0; j < k; ++j) po[rw * k + j] = po[rw * k + j] * ps[j] + pt[j];
        return nary(std::move(out), {x, s, t}, [this, rows, k](const std::vector<Var>& in, Var o) {
            const Var x = in[0], s = in[1], t = in[2];
            const T* g = node(o).grad.data();
            if (node(x).rg) {
                T* dx = node(x).grad.data();
                const T* ps = val(s).data();
                for (int64_t rw = 0; rw < rows; ++rw)
                    for (int64_t j = 0; j < k; ++j) dx[rw * k + j] += g[rw * k + j] * ps[j];
            }
            if (node(s).rg) {
                T* ds = node(s).grad.data();
                const T* px = val(x).data();
                for (int64_t rw = 0; rw < rows; ++rw)
                    for (int64_t j = 0; j < k; ++j) ds[j] += g[rw * k + j] * px[rw * k + j];
            }
            if (node(t).rg) {
                T* dt = node(t).grad.data();
                for (int64_t rw = 0; rw < rows; ++rw)
                    for (int64_t j = 0; j < k; ++j) dt[j] += g[rw * k + j];
            }
        });
    }

    // x[A,B,C] + m[B,C] (broadcast over axis 0).
    Var add_bcast0(Var x, Var m) {
        const auto& s = val(x).shape();
        expect(s.size() == 3 && val(m).rank() == 2 && val(m).dim(0) == s[1] &&
                   val(m).dim(1) == s[2],
               "add_bcast0: shape mismatch");
        const int64_t A = s[0], BC = s[1] * s[2];
        Tensor<T> out = val(x);
        T* po = out.data();
        const T* pm = val(m).data();
        for (int64_t a = 0; a < A; ++a)
            for (int64_t j = 0; j < BC; ++j) po[a * BC + j] += pm[j];
        return binary(std::move(out), x, m, [this, A, BC](Var x, Var m, Var o) {
            const T* g = node(o).grad.data();
            if (node(x).rg) accumulate(x, g, T(1));
            if (node(m).rg) {
                T* dm = node(m).grad.data();
                for (int64_t a = 0; a < A; ++a)
                    for (int64_t j = 0; j < BC; ++j) dm[j] += g[a * BC + j];
            }
        });
    }

    // x[A,B,C] + m[A,C] (broadcast over axis 1).
    Var add_bcast1(Var x, Var m) {
        const auto& s = val(x).shape();
        expect(s.size() == 3 && val(m).rank() == 2 && val(m).dim(0) == s[0] &&
                   val(m).dim(1) == s[2],
               "add_bcast1: shape mismatch");
        const int64_t A = s[0], B = s[1], C = s[2];
        Tensor<T> out = val(x);
        T* po = out.data();
        const T* pm = val(m).data();
        for (int64_t a = 0; a < A; ++a)
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) po[(a * B + b) * C + c] += pm[a * C + c];
        return binary(std::move(out), x, m, [this, A, B, C](Var x, Var m, Var o) {
            const T* g = node(o).grad.data();
            if (node(x).rg) accumulate(x, g, T(1));
            if (node(m).rg) {
                T* dm = node(m).grad.data();
                for (int64_t a = 0; a < A; ++a)
                    for (int64_t b = 0; b < B; ++b)
                        for (int64_t c = 0; c < C; ++c) dm[a * C + c] += g[(a * B + b) * C + c];
            }
        });
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        expect(val(a).rank() == 2 && val(b).rank() == 2 && val(a).dim(1) == val(b).dim(0),
               "matmul: shape mismatch");
        const int64_t M = val(a).dim(0), K = val(a).dim(1), N = val(b).dim(1);
        Tensor<T> out({M, N});
        MatMap(out.data(), M, N).noalias() =
            CMatMap(val(a).data(), M, K) * CMatMap(val(b).data(), K, N);
        return binary(std::move(out), a, b, [this, M, K, N](Var a, Var b, Var o) {
            CMatMap g(node(o).grad.data(), M, N);
            if (node(a).rg)
                MatMap(node(a).grad.data(), M, K).noalias() +=
                    g * CMatMap(val(b).data(), K, N).transpose();
            if (node(b).rg)
                MatMap(node(b).grad.data(), K, N).noalias() +=
                    CMatMap(val(a).data(), M, K).transpose() * g;
        });
    }

    // y = x * w^T + bias; x [M,K], w [N,K], bias [N].
    Var linear(Var x, Var w, Var bias) {
        expect(val(x).rank() == 2 && val(w).rank() == 2 && val(x).dim(1) == val(w).dim(1),
               "linear: shape mismatch");
        const int64_t M = val(x).dim(0), K = val(x).dim(1), N = val(w).dim(0);
        expect(val(bias).size() == N, "linear: bias size mismatch");
        Tensor<T> out({M, N});
        MatMap om(out.data(), M, N);
        om.noalias() = CMatMap(val(x).data(), M, K) * CMatMap(val(w).data(), N, K).transpose();
        const T* pb = val(bias).data();
        T* po = out.data();
        for (int64_t r = 0; r < M; ++r)
            for (int64_t c = 0; c < N; ++c) po[r * N + c] += pb[c];
        return nary(std::move(out), {x, w, bias},
                    [this, M, K, N](const std::vector<Var>& in, Var o) {
                        const Var x = in[0], w = in[1], bias = in[2];
                        CMatMap g(node(o).grad.data(), M, N);
                        if (node(x).rg)
                            MatMap(node(x).grad.data(), M, K).noalias() +=
                                g * CMatMap(val(w).data(), N, K);
                        if (node(w).rg)
                            MatMap(node(w).grad.data(), N, K).noalias() +=
                                g.transpose() * CMatMap(val(x).data(), M, K);
                        if (node(bias).rg) {
                            T* db = node(bias).grad.data();
                            const T* pg = node(o).grad.data();
                            for (int64_t r = 0; r < M; ++r)
                                for (int64_t c = 0; c < N; ++c) db[c] += pg[r * N + c];
                        }
                    });
    }

    // Batched matmul: a [B,M,K] * b [B,K,N] -> [B,M,N].
    Var bmm(Var a, Var b) {
        const auto& sa = val(a).shape();
        const auto& sb = val(b).shape();
        expect(sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[1],
               "bmm: shape mismatch");
        const int64_t B = sa[0], M = sa[1], K = sa[2], N = sb[2];
        Tensor<T> out({B, M, N});
        for (int64_t i = 0; i < B; ++i)
            MatMap(out.data() + i * M * N, M, N).noalias() =
                CMatMap(val(a).data() + i * M * K, M, K) *
                CMatMap(val(b).data() + i * K * N, K, N);
        return binary(std::move(out), a, b, [this, B, M, K, N](Var a, Var b, Var o) {
            for (int64_t i = 0; i < B; ++i) {
                CMatMap g(node(o).grad.data() + i * M * N, M, N);
                if (node(a).rg)
                    MatMap(node(a).grad.data() + i * M * K, M, K).noalias() +=
                        g * CMatMap(val(b).data() + i * K * N, K, N).transpose();
                if (node(b).rg)
                    MatMap(node(b).grad.data() + i * K * N, K, N).noalias() +=
                        CMatMap(val(a).data() + i * M * K, M, K).transpose() * g;
            }
        });
    }

    // Batched matmul with transposed second operand: a [B,M,K] * b [B,N,K]^T -> [B,M,N].
    Var bmm_nt(Var a, Var b) {
        const auto& sa = val(a).shape();
        const auto& sb = val(b).shape();
        expect(sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[2],
               "bmm_nt: shape mismatch");
        const int64_t B = sa[0], M = sa[1], K = sa[2], N = sb[1];
        Tensor<T> out({B, M, N});
        for (int64_t i = 0; i < B; ++i)
            MatMap(out.data() + i * M * N, M, N).noalias() =
                CMatMap(val(a).data() + i * M * K, M, K) *
                CMatMap(val(b).data() + i * N * K, N, K).transpose();
        return binary(std::move(out), a, b, [this, B, M, K, N](Var a, Var b, Var o) {
            for (int64_t i = 0; i < B; ++i) {
                CMatMap g(node(o).grad.data() + i * M * N, M, N);
                if (node(a).rg)
                    MatMap(node(a).grad.data() + i * M * K, M, K).noalias() +=
                        g * CMatMap(val(b).data() + i * N * K, N, K);
                if (node(b).rg)
                    MatMap(node(b).grad.data() + i * N * K, N, K).noalias() +=
                        g.transpose() * CMatMap(val(a).data() + i * M * K, M, K);
            }
        });
    }

    // ---- normalization and softmax ----

    Var softmax_last(Var a) {
        const int64_t k = val(a).shape().back();
        const int64_t rows = val(a).size() / k;
        Tensor<T> out = val(a);
        T* po = out.data();
        for (int64_t r = 0; r < rows; ++r) {
            T* rowp = po + r * k;
            double m = rowp[0];
            for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(rowp[j]));
            double s = 0;
            for (int64_t j = 0; j < k; ++j) {
                const double e = std::exp(static_cast<double>(rowp[j]) - m);
                rowp[j] = static_cast<T>(e);
                s += e;
            }
            for (int64_t j = 0; j < k; ++j) rowp[j] = static_cast<T>(rowp[j] / s);
        }
        return unary(std::move(out), a, [this, rows, k](Var a, Var o) {
            T* da = node(a).grad.data();
            const T* g = node(o).grad.data();
            const T* y = val(o).data();
            for (int64_t r = 0; r < rows; ++r) {
                double dot = 0;
                for (int64_t j = 0; j < k; ++j)
                    dot += static_cast<double>(g[r * k + j]) * static_cast<double>(y[r * k + j]);
                for (int64_t j = 0; j < k; ++j)
                    da[r * k + j] += static_cast<T>(static_cast<double>(y[r * k + j]) *
                                                    (static_cast<double>(g[r * k + j]) - dot));
            }
        });
    }

    // Layer norm over the last axis (population variance). Pass invalid Vars
    // for gamma/beta to get the non-affine variant used inside AdaLN blocks.
    Var layernorm(Var x, Var gamma = Var{}, Var beta = Var{}, double eps = 1e-5) {
        const int64_t k = val(x).shape().back();
        const int64_t rows = val(x).size() / k;
        const bool affine = gamma.valid();
        if (affine)
            expect(val(gamma).size() == k && beta.valid() && val(beta).size() == k,
                   "layernorm: affine size mismatch");
        Tensor<T> out(val(x).shape());
        std::vector<double> inv_sigma(static_cast<size_t>(rows));
        const T* px = val(x).data();
        T* po = out.data();
        for (int64_t r = 0; r < rows; ++r) {
            double mu = 0;
            for (int64_t j = 0; j < k; ++j) mu += px[r * k + j];
            mu /= static_cast<double>(k);
            double var = 0;
            for (int64_t j = 0; j < k; ++j) {
                const double d = static_cast<double>(px[r * k + j]) - mu;
                var += d * d;
            }
            var /= static_cast<double>(k);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_sigma[static_cast<size_t>(r)] = is;
            for (int64_t j = 0; j < k; ++j)
                po[r * k + j] = static_cast<T>((static_cast<double>(px[r * k + j]) - mu) * is);
        }
        // Keep the pre-affine normalized values for the backward pass.
        Tensor<T> norm = out;
        if (affine) {
            const T* pg = val(gamma).data();
            const T* pb = val(beta).data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < k; ++j)
                    po[r * k + j] = po[r * k + j] * pg[j] + pb[j];
        }
        std::vector<Var> parents = affine ? std::vector<Var>{x, gamma, beta}
                                          : std::vector<Var>{x};
        auto nrm = std::make_shared<Tensor<T>>(std::move(norm));
        auto isg = std::make_shared<std::vector<double>>(std::move(inv_sigma));
        return nary(std::move(out), parents,
                    [this, rows, k, affine, nrm, isg](const std::vector<Var>& in, Var o) {
                        const Var x = in[0];
                        const T* g = node(o).grad.data();
                        const T* y = nrm->data();
                        if (affine && node(in[1]).rg) {
                            T* dg = node(in[1]).grad.data();
                            for (int64_t r = 0; r < rows; ++r)
                                for (int64_t j = 0; j < k; ++j)
                                    dg[j] += g[r * k + j] * y[r * k + j];
                        }
                        if (affine && node(in[2]).rg) {
                            T* db = node(in[2]).grad.data();
                            for (int64_t r = 0; r < rows; ++r)
                                for (int64_t j = 0; j < k; ++j) db[j] += g[r * k + j];
                        }
                        if (!node(x).rg) return;
                        T* dx = node(x).grad.data();
                        const T* pg = affine ? val(in[1]).data() : nullptr;
                        for (int64_t r = 0; r < rows; ++r) {
                            double mg = 0, mgy = 0;
                            for (int64_t j = 0; j < k; ++j) {
                                const double gj =
                                    affine ? static_cast<double>(g[r * k + j]) * pg[j]
                                           : static_cast<double>(g[r * k + j]);
                                mg += gj;
                                mgy += gj * static_cast<double>(y[r * k + j]);
                            }
                            mg /= static_cast<double>(k);
                            mgy /= static_cast<double>(k);
                            const double is = (*isg)[static_cast<size_t>(r)];
                            for (int64_t j = 0; j < k; ++j) {
                                const double gj =
                                    affine ? static_cast<double>(g[r * k + j]) * pg[j]
                                           : static_cast<double>(g[r * k + j]);
                                dx[r * k + j] += static_cast<T>(
                                    is * (gj - mg - static_cast<double>(y[r * k + j]) * mgy));
                            }
                        }
                    });
    }

    // ---- convolution and spatial ----

    // x [B,Cin,H,W], w [Cout,Cin,kh,kw], bias [Cout]; zero padding.
    Var conv2d(Var x, Var w, Var bias, int64_t stride, int64_t pad) {
        const auto& sx = val(x).shape();
        const auto& sw = val(w).shape();
        expect(sx.size() == 4 && sw.size() == 4 && sx[1] == sw[1], "conv2d: shape mismatch");
        const int64_t B = sx[0], C = sx[1], H = sx[2], W = sx[3];
        const int64_t O = sw[0], kh = sw[2], kw = sw[3];
        expect(val(bias).size() == O, "conv2d: bias size mismatch");
        const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
        const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
        expect(Ho >= 1 && Wo >= 1, "conv2d: kernel larger than padded input");
        const int64_t ckk = C * kh * kw;
        Tensor<T> out({B, O, Ho, Wo});
        std::vector<T> col(static_cast<size_t>(ckk * Ho * Wo));
        for (int64_t b = 0; b < B; ++b) {
            im2col(val(x).data() + b * C * H * W, col.data(), C, H, W, kh, kw, stride, pad, Ho,
                   Wo);
            MatMap(out.data() + b * O * Ho * Wo, O, Ho * Wo).noalias() =
                CMatMap(val(w).data(), O, ckk) * CMatMap(col.data(), ckk, Ho * Wo);
        }
        const T* pb = val(bias).data();
        T* po = out.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t oc = 0; oc < O; ++oc) {
                const T bv = pb[oc];
                T* plane = po + (b * O + oc) * Ho * Wo;
                for (int64_t i = 0; i < Ho * Wo; ++i) plane[i] += bv;
            }
        return nary(std::move(out), {x, w, bias},
                    [this, B, C, H, W, O, kh, kw, stride, pad, Ho, Wo,
                     ckk](const std::vector<Var>& in, Var o) {
                        const Var x = in[0], w = in[1], bias = in[2];
                        std::vector<T> col(static_cast<size_t>(ckk * Ho * Wo));
                        std::vector<T> dcol(static_cast<size_t>(ckk * Ho * Wo));
                        for (int64_t b = 0; b < B; ++b) {
                            CMatMap g(node(o).grad.data() + b * O * Ho * Wo, O, Ho * Wo);
                            if (node(w).rg) {
                                im2col(val(x).data() + b * C * H * W, col.data(), C, H, W, kh,
                                       kw, stride, pad, Ho, Wo);
                                MatMap(node(w).grad.data(), O, ckk).noalias() +=
                                    g * CMatMap(col.data(), ckk, Ho * Wo).transpose();
                            }
                            if (node(x).rg) {
                                MatMap(dcol.data(), ckk, Ho * Wo).noalias() =
                                    CMatMap(val(w).data(), O, ckk).transpose() * g;
                                col2im(dcol.data(), node(x).grad.data() + b * C * H * W, C, H, W,
                                       kh, kw, stride, pad, Ho, Wo);
                            }
                        }
                        if (node(bias).rg) {
                            T* db = node(bias).grad.data();
                            const T* pg = node(o).grad.data();
                            for (int64_t b = 0; b < B; ++b)
                                for (int64_t oc = 0; oc < O; ++oc) {
                                    double s = 0;
                                    const T* plane = pg + (b * O + oc) * Ho * Wo;
                                    for (int64_t i = 0; i < Ho * Wo; ++i) s += plane[i];
                                    db[oc] += static_cast<T>(s);
                                }
                        }
                    });
    }

    // [B, C*r*r, H, W] -> [B, C, H*r, W*r]; block (dy,dx) comes from channel
    // c*r*r + dy*r + dx.
    Var pixel_shuffle(Var x, int64_t r) {
        const auto& s = val(x).shape();
        expect(s.size() == 4 && s[1] % (r * r) == 0, "pixel_shuffle: channels not divisible");
        const int64_t B = s[0], C = s[1] / (r * r), H = s[2], W = s[3];
        Tensor<T> out({B, C, H * r, W * r});
        const T* pi = val(x).data();
        T* po = out.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t dy = 0; dy < r; ++dy)
                    for (int64_t dx = 0; dx < r; ++dx) {
                        const T* src = pi + (((b * C + c) * r * r + dy * r + dx) * H) * W;
                        for (int64_t y = 0; y < H; ++y)
                            for (int64_t x2 = 0; x2 < W; ++x2)
                                po[((b * C + c) * H * r + (y * r + dy)) * W * r + (x2 * r + dx)] =
                                    src[y * W + x2];
                    }
        return unary(std::move(out), x, [this, B, C, H, W, r](Var x, Var o) {
            T* dx_ = node(x).grad.data();
            const T* g = node(o).grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t dy = 0; dy < r; ++dy)
                        for (int64_t dx = 0; dx < r; ++dx) {
                            T* dst = dx_ + (((b * C + c) * r * r + dy * r + dx) * H) * W;
                            for (int64_t y = 0; y < H; ++y)
                                for (int64_t x2 = 0; x2 < W; ++x2)
                                    dst[y * W + x2] +=
                                        g[((b * C + c) * H * r + (y * r + dy)) * W * r +
                                          (x2 * r + dx)];
                        }
        });
    }

    // ---- reductions ----

    // [B,C,H,W] -> [B,C] spatial mean.
    Var mean_hw(Var x) {
        const auto& s = val(x).shape();
        expect(s.size() == 4, "mean_hw: rank must be 4");
        const int64_t B = s[0], C = s[1], HW = s[2] * s[3];
        Tensor<T> out({B, C});
        const T* pi = val(x).data();
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double acc = 0;
            for (int64_t i = 0; i < HW; ++i) acc += pi[bc * HW + i];
            out[bc] = static_cast<T>(acc / static_cast<double>(HW));
        }
        return unary(std::move(out), x, [this, B, C, HW](Var x, Var o) {
            T* dx = node(x).grad.data();
            const T* g = node(o).grad.data();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const T gv = static_cast<T>(static_cast<double>(g[bc]) / HW);
                for (int64_t i = 0; i < HW; ++i) dx[bc * HW + i] += gv;
            }
        });
    }

    // [B,C,H,W] -> [C], mean over batch and space; the global pooling head.
    Var mean_bhw(Var x) {
        const auto& s = val(x).shape();
        expect(s.size() == 4, "mean_bhw: rank must be 4");
        const int64_t B = s[0], C = s[1], HW = s[2] * s[3];
        Tensor<T> out({C});
        const T* pi = val(x).data();
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < HW; ++i) acc += pi[(b * C + c) * HW + i];
            out[c] = static_cast<T>(acc / static_cast<double>(B * HW));
        }
        return unary(std::move(out), x, [this, B, C, HW](Var x, Var o) {
            T* dx = node(x).grad.data();
            const T* g = node(o).grad.data();
            for (int64_t c = 0; c < C; ++c) {
                const T gv = static_cast<T>(static_cast<double>(g[c]) / (B * HW));
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t i = 0; i < HW; ++i) dx[(b * C + c) * HW + i] += gv;
            }
        });
    }

    // y[b,c,h,w] = x[b,c,h,w] * s[b,c]; channel attention gating.
    Var scale_channels(Var x, Var s) {
        const auto& sx = val(x).shape();
        expect(sx.size() == 4 && val(s).rank() == 2 && val(s).dim(0) == sx[0] &&
                   val(s).dim(1) == sx[1],
               "scale_channels: shape mismatch");
        const int64_t BC = sx[0] * sx[1], HW = sx[2] * sx[3];
        Tensor<T> out = val(x);
        T* po = out.data();
        const T* ps = val(s).data();
        for (int64_t bc = 0; bc < BC; ++bc)
            for (int64_t i = 0; i < HW; ++i) po[bc * HW + i] *= ps[bc];
        return binary(std::move(out), x, s, [this, BC, HW](Var x, Var s, Var o) {
            const T* g = node(o).grad.data();
            if (node(x).rg) {
                T* dx = node(x).grad.data();
                const T* ps = val(s).data();
                for (int64_t bc = 0; bc < BC; ++bc)
                    for (int64_t i = 0; i < HW; ++i) dx[bc * HW + i] += g[bc * HW + i] * ps[bc];
            }
            if (node(s).rg) {
                T* ds = node(s).grad.data();
                const T* px = val(x).data();
                for (int64_t bc = 0; bc < BC; ++bc) {
                    double acc = 0;
                    for (int64_t i = 0; i < HW; ++i)
                        acc += static_cast<double>(g[bc * HW + i]) * px[bc * HW + i];
                    ds[bc] += static_cast<T>(acc);
                }
            }
        });
    }

    Var sum(Var x) {
        double acc = 0;
        const T* pi = val(x).data();
        for (int64_t i = 0; i < val(x).size(); ++i) acc += pi[i];
        Tensor<T> out({1});
        out[0] = static_cast<T>(acc);
        return unary(std::move(out), x, [this](Var x, Var o) {
            accumulate(x, nullptr, node(o).grad[0]);
        });
    }

    Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(val(x).size())); }

    Var mse(Var a, Var b) {
        expect(val(a).same_shape(val(b)), "mse: shape mismatch");
        const int64_t n = val(a).size();
        double acc = 0;
        const T* pa = val(a).data();
        const T* pb = val(b).data();
        for (int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
            acc += d * d;
        }
        Tensor<T> out({1});
        out[0] = static_cast<T>(acc / static_cast<double>(n));
        return binary(std::move(out), a, b, [this, n](Var a, Var b, Var o) {
            const double g = static_cast<double>(node(o).grad[0]) * 2.0 / n;
            const T* pa = val(a).data();
            const T* pb = val(b).data();
            if (node(a).rg) {
                T* da = node(a).grad.data();
                for (int64_t i = 0; i < n; ++i)
                    da[i] += static_cast<T>(g * (static_cast<double>(pa[i]) - pb[i]));
            }
            if (node(b).rg) {
                T* db = node(b).grad.data();
                for (int64_t i = 0; i < n; ++i)
                    db[i] -= static_cast<T>(g * (static_cast<double>(pa[i]) - pb[i]));
            }
        });
    }

private:
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void()> back;
        bool rg = false;
    };

    // deque keeps val()/grad() references stable while new nodes are appended
    std::deque<Node> nodes_;
    std::map<std::pair<const void*, int64_t>, int32_t> param_nodes_;
    std::vector<std::pair<int64_t, int32_t>> param_list_;

    Node& node(Var v) { return nodes_[static_cast<size_t>(v.i)]; }
    const Node& node(Var v) const { return nodes_[static_cast<size_t>(v.i)]; }

    static void expect(bool ok, const char* msg) {
        if (!ok) throw DataError(msg);
    }

    Var make(Tensor<T> v, bool rg, std::function<void()> back) {
        Node n;
        n.val = std::move(v);
        n.rg = rg;
        if (rg) n.grad = Tensor<T>(n.val.shape());
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    // Add grad*k into a parent (pass src=nullptr for a constant fill of k).
    void accumulate(Var a, const T* src, T k) {
        if (!node(a).rg) return;
        T* dst = node(a).grad.data();
        const int64_t n = node(a).grad.size();
        if (src) {
            if (k == T(1))
                for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
            else
                for (int64_t i = 0; i < n; ++i) dst[i] += k * src[i];
        } else {
            for (int64_t i = 0; i < n; ++i) dst[i] += k;
        }
    }

    template <typename F>
    Var unary(Tensor<T> out, Var a, F&& back) {
        const bool rg = node(a).rg;
        if (!rg) return make(std::move(out), false, nullptr);
        Var o = make(std::move(out), true, nullptr);
        node(o).back = [f = std::forward<F>(back), a, o]() mutable { f(a, o); };
        return o;
    }

    template <typename F>
    Var binary(Tensor<T> out, Var a, Var b, F&& back) {
        const bool rg = node(a).rg || node(b).rg;
        if (!rg) return make(std::move(out), false, nullptr);
        Var o = make(std::move(out), true, nullptr);
        node(o).back = [f = std::forward<F>(back), a, b, o]() mutable { f(a, b, o); };
        return o;
    }

    template <typename F>
    Var nary(Tensor<T> out, std::vector<Var> in, F&& back) {
        bool rg = false;
        for (Var v : in) rg = rg || node(v).rg;
        if (!rg) return make(std::move(out), false, nullptr);
        Var o = make(std::move(out), true, nullptr);
        node(o).back = [f = std::forward<F>(back), in = std::move(in), o]() mutable { f(in, o); };
        return o;
    }

    // Walk the permuted view in output order, handing (output linear index,
    // input linear offset) pairs to the visitor.
    template <typename F>
    static void permute_walk(const std::vector<int64_t>& oshape,
                             const std::vector<int64_t>& ostride_in, F&& visit) {
        const size_t r = oshape.size();
        std::vector<int64_t> idx(r, 0);
        int64_t total = 1;
        for (int64_t d : oshape) total *= d;
        int64_t in_off = 0;
        for (int64_t lin = 0; lin < total; ++lin) {
            visit(lin, in_off);
            for (size_t ax = r; ax-- > 0;) {
                idx[ax]++;
                in_off += ostride_in[ax];
                if (idx[ax] < oshape[ax]) break;
                idx[ax] = 0;
                in_off -= ostride_in[ax] * oshape[ax];
            }
        }
    }

    static void im2col(const T* img, T* col, int64_t C, int64_t H, int64_t W, int64_t kh,
                       int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < kh; ++i)
                for (int64_t j = 0; j < kw; ++j) {
                    T* dst = col + ((c * kh + i) * kw + j) * Ho * Wo;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t y = oy * stride - pad + i;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t x = ox * stride - pad + j;
                            dst[oy * Wo + ox] = (y >= 0 && y < H && x >= 0 && x < W)
                                                    ? img[(c * H + y) * W + x]
                                                    : T(0);
                        }
                    }
                }
    }

    static void col2im(const T* col, T* img, int64_t C, int64_t H, int64_t W, int64_t kh,
                       int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < kh; ++i)
                for (int64_t j = 0; j < kw; ++j) {
                    const T* src = col + ((c * kh + i) * kw + j) * Ho * Wo;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t y = oy * stride - pad + i;
                        if (y < 0 || y >= H) continue;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t x = ox * stride - pad + j;
                            if (x >= 0 && x < W) img[(c * H + y) * W + x] += src[oy * Wo + ox];
                        }
                    }
                }
    }
};

}  // namespace vdr
