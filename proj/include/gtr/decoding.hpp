#pragma once

// Whole-document beam search. Group tags follow the generated markers, each
// target sentence is capped relative to its source sentence, and a
// hypothesis finishes with the eos of the last source sentence.

#include <vector>

#include "gtr/model.hpp"

namespace gtr {

struct LengthParams {
    double a = 2.0;  // per-sentence cap: a * source sentence length + b content tokens
    double b = 10.0;
    double alpha = 1.0;  // length normalisation exponent
};

struct BeamHypothesis {
    std::vector<TokenId> tokens;  // starts with bos
    GroupTagSeq tags;
    double score = 0.0;  // cumulative log-probability
    int current_sentence_len = 0;
    int sentences_done = 0;
    bool finished = false;
    int finish_step = -1;
};

/// score / len^alpha with len = number of tokens after the initial bos.
[[nodiscard]] double length_normalized_score(const BeamHypothesis& hyp, double alpha);

/// Ranking used for the returned hypothesis: normalised score, then earlier
/// completion, then lexicographic token order.
[[nodiscard]] bool better_hypothesis(const BeamHypothesis& a, const BeamHypothesis& b, double alpha);

struct DecodeResult {
    TokenDocument document;
    BeamHypothesis hypothesis;
    double normalized_score = 0.0;
    bool truncated = false;
};

/// One left-to-right pass over the whole document. Widths 1..beam_size are
/// searched and the best answer kept, so a wider beam never scores lower.
[[nodiscard]] DecodeResult beam_search_document(const TokenDocument& src, const Transformer& model, int beam_size,
                                                const LengthParams& len = {});

}  // namespace gtr
