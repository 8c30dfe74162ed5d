#pragma once

#include <array>
#include <span>
#include <string>

#include "gtr/tagging.hpp"

namespace gtr {

inline constexpr int kBleuOrder = 4;
/// Stand-in for a zero n-gram precision (scaled by the candidate n-gram count).
inline constexpr double kBleuEpsilon = 1e-9;

struct BleuReport {
    double score = 0.0;  // 0..100
    std::array<double, kBleuOrder> precisions{};
    std::array<long, kBleuOrder> matches{};
    std::array<long, kBleuOrder> totals{};
    double brevity_penalty = 0.0;
    long hyp_length = 0;
    long ref_length = 0;

    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] std::string summary() const;
};

/// Corpus BLEU-4 over token segments (case-sensitive ids, clipped counts,
/// standard brevity penalty).
[[nodiscard]] BleuReport corpus_bleu(std::span<const std::vector<TokenId>> candidates,
                                     std::span<const std::vector<TokenId>> references);

/// Each document is one segment; sentence markers and padding are dropped.
[[nodiscard]] BleuReport d_bleu(std::span<const TokenDocument> candidates, std::span<const TokenDocument> references);

/// Documents are split into sentences, paired by position. Throws
/// StructureError when a pair of documents has different sentence counts.
[[nodiscard]] BleuReport s_bleu(std::span<const TokenDocument> candidates, std::span<const TokenDocument> references);

}  // namespace gtr
