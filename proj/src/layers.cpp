#include "gtr/layers.hpp"

#include <cmath>

namespace gtr {

Eigen::MatrixXd sinusoidal_positions(Index len, Index d_model, Index offset) {
    Eigen::MatrixXd pe(len, d_model);
    for (Index pos = 0; pos < len; ++pos) {
        const auto p = static_cast<double>(pos + offset);
        for (Index i = 0; i < d_model; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
            pe(pos, i) = std::sin(p * freq);
            if (i + 1 < d_model) pe(pos, i + 1) = std::cos(p * freq);
        }
    }
    return pe;
}

Eigen::MatrixXd dropout_mask(Index rows, Index cols, double p, std::mt19937_64& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
    std::bernoulli_distribution drop(p);
    const double keep = 1.0 / (1.0 - p);
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = drop(rng) ? 0.0 : keep;
    return m;
}

Var dropout(Var x, double p, bool training, std::mt19937_64* rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    if (rng == nullptr) throw std::logic_error("training-mode dropout needs an RNG");
    return ag::apply_dropout(x, dropout_mask(x.rows(), x.cols(), p, *rng));
}

std::vector<TokenId> word_dropout(std::span<const TokenId> tokens, double p, TokenId unk_id, std::mt19937_64& rng,
                                  const SpecialTokens& special) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("word dropout probability must lie in [0, 1]");
    std::vector<TokenId> out(tokens.begin(), tokens.end());
    if (p == 0.0) return out;
    std::bernoulli_distribution drop(p);
    for (auto& t : out) {
        if (t == special.bos || t == special.eos || t == special.pad || t == unk_id) continue;
        if (drop(rng)) t = unk_id;
    }
    return out;
}

Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2) {
    return ag::add_row(ag::matmul(ag::relu(ag::add_row(ag::matmul(x, w1), b1)), w2), b2);
}

}  // namespace gtr
