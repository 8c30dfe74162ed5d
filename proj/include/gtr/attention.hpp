#pragma once

// Attention mathematics on dense Eigen matrices: masks, scaled dot-product
// attention, multi-head attention, group attention and the gated
// local/global combination. Everything is templated on the scalar type and
// free of internal state.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gtr/errors.hpp"
#include "gtr/tagging.hpp"

namespace gtr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Eigen::Index;

inline constexpr double kDefaultGamma = -1e8;

/// Additive mask entries at or below this value count as "masked" when
/// deciding whether a whole softmax row has no admissible key.
inline constexpr double kMaskedThreshold = -1e4;

/// Entry (i, j) is 0 when query i and key j carry the same non-zero tag and
/// gamma otherwise. Tag 0 (padding) is masked against everything, including
/// other padding.
template <typename Scalar = double>
[[nodiscard]] Matrix<Scalar> group_mask(std::span<const GroupTag> g_q, std::span<const GroupTag> g_k,
                                        Scalar gamma = Scalar(kDefaultGamma)) {
    Matrix<Scalar> m(static_cast<Index>(g_q.size()), static_cast<Index>(g_k.size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            const GroupTag a = g_q[static_cast<std::size_t>(i)];
            const GroupTag b = g_k[static_cast<std::size_t>(j)];
            m(i, j) = (a != 0 && a == b) ? Scalar(0) : gamma;
        }
    }
    return m;
}

/// gamma on every column whose key is padding (tag 0), 0 elsewhere.
template <typename Scalar = double>
[[nodiscard]] Matrix<Scalar> key_padding_mask(Index len_q, std::span<const GroupTag> g_k,
                                              Scalar gamma = Scalar(kDefaultGamma)) {
    Matrix<Scalar> m(len_q, static_cast<Index>(g_k.size()));
    for (Index j = 0; j < m.cols(); ++j) {
        m.col(j).setConstant(g_k[static_cast<std::size_t>(j)] == 0 ? gamma : Scalar(0));
    }
    return m;
}

/// gamma where key j lies after query i; query i sits at absolute position
/// query_offset + i.
template <typename Scalar = double>
[[nodiscard]] Matrix<Scalar> causal_mask(Index len_q, Index len_k, Scalar gamma = Scalar(kDefaultGamma),
                                         Index query_offset = 0) {
    Matrix<Scalar> m(len_q, len_k);
    for (Index i = 0; i < len_q; ++i) {
        for (Index j = 0; j < len_k; ++j) m(i, j) = j > query_offset + i ? gamma : Scalar(0);
    }
    return m;
}

/// Number of query/key pairs left unmasked by group attention, i.e. pairs
/// with equal non-zero tags.
[[nodiscard]] std::int64_t unmasked_entry_count(std::span<const GroupTag> g_q, std::span<const GroupTag> g_k);

template <typename Scalar>
struct AttentionResult {
    Matrix<Scalar> output;   // [len_q x d_v]
    Matrix<Scalar> weights;  // [len_q x len_k], post-softmax
    Index fully_masked_rows = 0;
};

/// Below this argument exp() underflows to a subnormal or zero.
template <typename Scalar>
inline const Scalar kMinExpArg = std::log(std::numeric_limits<Scalar>::min());

/// Row-wise softmax of (scores + mask). Rows whose mask entries are all at
/// or below kMaskedThreshold become uniform; the count of such rows is
/// returned through `fully_masked`.
template <typename DerivedS, typename DerivedM>
[[nodiscard]] Matrix<typename DerivedS::Scalar> masked_softmax(const Eigen::MatrixBase<DerivedS>& scores,
                                                               const Eigen::MatrixBase<DerivedM>& mask,
                                                               Index* fully_masked = nullptr) {
    using Scalar = typename DerivedS::Scalar;
    if (scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
        throw ShapeError("attention mask shape does not match score shape");
    }
    Matrix<Scalar> p(scores.rows(), scores.cols());
    Index masked_rows = 0;
    for (Index i = 0; i < scores.rows(); ++i) {
        if ((mask.row(i).array() <= Scalar(kMaskedThreshold)).all()) {
            p.row(i).setConstant(Scalar(1) / static_cast<Scalar>(scores.cols()));
            ++masked_rows;
            continue;
        }
        const RowVector<Scalar> z = scores.row(i) + mask.row(i);
        const Scalar top = z.maxCoeff();
        // Vectorised exp clamps very negative arguments to subnormal results
        // instead of 0; subnormals make later products very slow.
        const auto shifted = (z.array() - top).eval();
        const RowVector<Scalar> e = (shifted < kMinExpArg<Scalar>).select(Scalar(0), shifted.exp()).matrix();
        p.row(i) = e / e.sum();
    }
    if (fully_masked != nullptr) *fully_masked = masked_rows;
    return p;
}

/// softmax(Q K^T / sqrt(d_k) + mask) V with d_k = cols(Q).
template <typename DerivedQ, typename DerivedK, typename DerivedV, typename DerivedM>
[[nodiscard]] AttentionResult<typename DerivedQ::Scalar> scaled_attention(const Eigen::MatrixBase<DerivedQ>& q,
                                                                          const Eigen::MatrixBase<DerivedK>& k,
                                                                          const Eigen::MatrixBase<DerivedV>& v,
                                                                          const Eigen::MatrixBase<DerivedM>& mask) {
    using Scalar = typename DerivedQ::Scalar;
    if (q.cols() != k.cols()) throw ShapeError("query and key widths differ");
    if (k.rows() != v.rows()) throw ShapeError("key and value lengths differ");
    if (k.rows() == 0) throw ShapeError("attention needs at least one key");
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
    AttentionResult<Scalar> r;
    r.weights = masked_softmax((q * k.transpose()) * scale, mask, &r.fully_masked_rows);
    r.output = r.weights * v;
    return r;
}

/// Per-head projections with the heads packed side by side: head i uses
/// columns [i*d_k, (i+1)*d_k) of w_q, w_k and w_v, and rows of the same range
/// of w_o.
template <typename Scalar>
struct HeadProjections {
    Matrix<Scalar> w_q;  // d_model x h*d_k
    Matrix<Scalar> w_k;
    Matrix<Scalar> w_v;
    Matrix<Scalar> w_o;  // h*d_k x d_model
    int n_heads = 1;

    [[nodiscard]] Index d_model() const { return w_q.rows(); }
    [[nodiscard]] Index d_k() const { return w_q.cols() / n_heads; }

    [[nodiscard]] auto query(int head) const { return w_q.middleCols(head * d_k(), d_k()); }
    [[nodiscard]] auto key(int head) const { return w_k.middleCols(head * d_k(), d_k()); }
    [[nodiscard]] auto value(int head) const { return w_v.middleCols(head * d_k(), d_k()); }

    void validate() const {
        if (n_heads < 1) throw ShapeError("head count must be positive");
        const Index d = w_q.rows();
        if (d % n_heads != 0) throw ShapeError("head count must divide d_model");
        if (w_q.cols() != d || w_k.rows() != d || w_k.cols() != d || w_v.rows() != d || w_v.cols() != d ||
            w_o.rows() != d || w_o.cols() != d) {
            throw ShapeError("head projections must be d_model x d_model with d_k = d_model / h");
        }
    }

    static HeadProjections identity(Index d_model, int n_heads) {
        HeadProjections p;
        p.n_heads = n_heads;
        p.w_q = p.w_k = p.w_v = p.w_o = Matrix<Scalar>::Identity(d_model, d_model);
        return p;
    }
};

template <typename Scalar>
struct MultiHeadResult {
    Matrix<Scalar> output;                     // [len_q x d_model]
    std::vector<Matrix<Scalar>> head_weights;  // one [len_q x len_k] per head
    Index fully_masked_rows = 0;               // summed over heads
};

/// Multi-head attention on inputs that are already projected (the packed
/// per-head query/key/value blocks), followed by the output projection.
template <typename Scalar>
[[nodiscard]] MultiHeadResult<Scalar> multi_head_projected(const Matrix<Scalar>& q_proj, const Matrix<Scalar>& k_proj,
                                                           const Matrix<Scalar>& v_proj,
                                                           const std::type_identity_t<Matrix<Scalar>>& mask, int n_heads, const Matrix<Scalar>& w_o) {
    if (q_proj.cols() % n_heads != 0) throw ShapeError("head count must divide projected width");
    const Index d_k = q_proj.cols() / n_heads;
    MultiHeadResult<Scalar> r;
    Matrix<Scalar> concat(q_proj.rows(), q_proj.cols());
    for (int h = 0; h < n_heads; ++h) {
        auto head = scaled_attention(q_proj.middleCols(h * d_k, d_k), k_proj.middleCols(h * d_k, d_k),
                                     v_proj.middleCols(h * d_k, d_k), mask);
        concat.middleCols(h * d_k, d_k) = head.output;
        r.fully_masked_rows += head.fully_masked_rows;
        r.head_weights.push_back(std::move(head.weights));
    }
    r.output = concat * w_o;
    return r;
}

/// Concat(head_1..head_h) W^O with head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).
template <typename Scalar>
[[nodiscard]] MultiHeadResult<Scalar> multi_head(const Matrix<Scalar>& q, const Matrix<Scalar>& k,
                                                 const Matrix<Scalar>& v,
                                                 const std::type_identity_t<Matrix<Scalar>>& mask,
                                                 const HeadProjections<Scalar>& heads) {
    heads.validate();
    if (q.cols() != heads.d_model() || k.cols() != heads.d_model() || v.cols() != heads.d_model()) {
        throw ShapeError("attention inputs must have d_model columns");
    }
    return multi_head_projected<Scalar>(q * heads.w_q, k * heads.w_k, v * heads.w_v, mask, heads.n_heads, heads.w_o);
}

/// Query/key/value matrices together with their group tags.
template <typename Scalar>
struct AttentionInputs {
    const Matrix<Scalar>& q;
    const Matrix<Scalar>& k;
    const Matrix<Scalar>& v;
    std::span<const GroupTag> g_q;
    std::span<const GroupTag> g_k;
    bool causal = false;
    Index query_offset = 0;  // absolute position of the first query row (causal only)

    void validate() const {
        if (static_cast<Index>(g_q.size()) != q.rows()) throw ShapeError("query tag count differs from query rows");
        if (static_cast<Index>(g_k.size()) != k.rows() || k.rows() != v.rows()) {
            throw ShapeError("key tag count differs from key/value rows");
        }
    }
};

/// Group mask (plus causal mask when requested) for local attention.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> local_attention_mask(const AttentionInputs<Scalar>& in, Scalar gamma) {
    Matrix<Scalar> m = group_mask<Scalar>(in.g_q, in.g_k, gamma);
    if (in.causal) m += causal_mask<Scalar>(in.q.rows(), in.k.rows(), gamma, in.query_offset);
    return m;
}

/// Key-padding mask (plus causal mask when requested) for global attention.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> global_attention_mask(const AttentionInputs<Scalar>& in, Scalar gamma) {
    Matrix<Scalar> m = key_padding_mask<Scalar>(in.q.rows(), in.g_k, gamma);
    if (in.causal) m += causal_mask<Scalar>(in.q.rows(), in.k.rows(), gamma, in.query_offset);
    return m;
}

template <typename Scalar>
[[nodiscard]] MultiHeadResult<Scalar> group_mha(const AttentionInputs<Scalar>& in, const HeadProjections<Scalar>& heads,
                                                Scalar gamma = Scalar(kDefaultGamma)) {
    in.validate();
    return multi_head(in.q, in.k, in.v, local_attention_mask(in, gamma), heads);
}

template <typename Scalar>
[[nodiscard]] MultiHeadResult<Scalar> global_mha(const AttentionInputs<Scalar>& in, const HeadProjections<Scalar>& heads,
                                                 Scalar gamma = Scalar(kDefaultGamma)) {
    in.validate();
    return multi_head(in.q, in.k, in.v, global_attention_mask(in, gamma), heads);
}

/// Gate-sum parameters: g = sigmoid([H_L, H_G] W + b).
template <typename Scalar>
struct GateParams {
    Matrix<Scalar> w;     // 2*d_model x d_model
    RowVector<Scalar> b;  // d_model

    void validate(Index d_model) const {
        if (w.rows() != 2 * d_model || w.cols() != d_model || b.size() != d_model) {
            throw ShapeError("gate parameters must be 2*d_model x d_model and d_model");
        }
    }
};

/// Element-wise gate g in (0, 1) for the local/global mixture.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> gate_values(const Matrix<Scalar>& local, const Matrix<Scalar>& global,
                                         const GateParams<Scalar>& gate) {
    gate.validate(local.cols());
    const Index d = local.cols();
    Matrix<Scalar> z = local * gate.w.topRows(d) + global * gate.w.bottomRows(d);
    z.rowwise() += gate.b;
    return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

/// H = H_L * g + H_G * (1 - g), element-wise.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> gate_sum(const Matrix<Scalar>& local, const Matrix<Scalar>& global,
                                      const Matrix<Scalar>& g) {
    return (local.array() * g.array() + global.array() * (Scalar(1) - g.array())).matrix();
}

template <typename Scalar>
struct CombinedResult {
    Matrix<Scalar> output;
    Matrix<Scalar> gate;
    MultiHeadResult<Scalar> local;
    MultiHeadResult<Scalar> global;
};

template <typename Scalar>
[[nodiscard]] CombinedResult<Scalar> combined_attention(const AttentionInputs<Scalar>& in,
                                                        const HeadProjections<Scalar>& group_heads,
                                                        const HeadProjections<Scalar>& global_heads,
                                                        const GateParams<Scalar>& gate,
                                                        Scalar gamma = Scalar(kDefaultGamma)) {
    if (group_heads.d_model() != global_heads.d_model()) throw ShapeError("head sets disagree on d_model");
    CombinedResult<Scalar> r;
    r.local = group_mha(in, group_heads, gamma);
    r.global = global_mha(in, global_heads, gamma);
    r.gate = gate_values(r.local.output, r.global.output, gate);
    r.output = gate_sum(r.local.output, r.global.output, r.gate);
    return r;
}

}  // namespace gtr
