#pragma once

// Standard Transformer building blocks, in two flavours: differentiable
// versions on a Tape (training, full passes) and plain Eigen versions used by
// the cached incremental decoder.

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

#include "gtr/attention.hpp"
#include "gtr/autograd.hpp"
#include "gtr/tagging.hpp"

namespace gtr {

inline constexpr double kLayerNormEps = 1e-5;

/// Fixed sinusoidal encodings for absolute positions offset..offset+len-1.
[[nodiscard]] Eigen::MatrixXd sinusoidal_positions(Index len, Index d_model, Index offset = 0);

/// Inverted-dropout mask: entries are 0 with probability p, 1/(1-p) otherwise.
[[nodiscard]] Eigen::MatrixXd dropout_mask(Index rows, Index cols, double p, std::mt19937_64& rng);

/// Identity unless `training` and p > 0. Throws ConfigError for p outside [0, 1).
[[nodiscard]] Var dropout(Var x, double p, bool training, std::mt19937_64* rng);

/// Replaces every token other than sentence markers, padding (and unk
/// itself) with unk_id, independently with probability p.
[[nodiscard]] std::vector<TokenId> word_dropout(std::span<const TokenId> tokens, double p, TokenId unk_id,
                                                std::mt19937_64& rng, const SpecialTokens& special = kSpecial);

/// relu(x W1 + b1) W2 + b2 on a tape.
[[nodiscard]] Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2);

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> feed_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& w1, const RowVector<Scalar>& b1,
                                          const Matrix<Scalar>& w2, const RowVector<Scalar>& b2) {
    if (x.cols() != w1.rows() || w1.cols() != b1.size() || w1.cols() != w2.rows() || w2.cols() != b2.size()) {
        throw ShapeError("feed_forward: shape mismatch");
    }
    Matrix<Scalar> h = x * w1;
    h.rowwise() += b1;
    h = h.cwiseMax(Scalar(0));
    Matrix<Scalar> out = h * w2;
    out.rowwise() += b2;
    return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const RowVector<Scalar>& gain,
                                        const RowVector<Scalar>& bias, Scalar eps = Scalar(kLayerNormEps)) {
    if (gain.size() != x.cols() || bias.size() != x.cols()) throw ShapeError("layer_norm: gain/bias width");
    const auto mean = x.rowwise().mean().eval();
    Matrix<Scalar> c = x.colwise() - mean;
    const auto var = c.array().square().rowwise().mean().eval();
    c = c.array().colwise() * (var + eps).rsqrt();
    Matrix<Scalar> out = c.array().rowwise() * gain.array();
    out.rowwise() += bias;
    return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& z) {
    Matrix<Scalar> out(z.rows(), z.cols());
    for (Index i = 0; i < z.rows(); ++i) {
        const Scalar top = z.row(i).maxCoeff();
        const Scalar lse = top + std::log((z.row(i).array() - top).exp().sum());
        out.row(i) = z.row(i).array() - lse;
    }
    return out;
}

}  // namespace gtr
