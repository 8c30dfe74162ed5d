#include "gtr/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gtr/errors.hpp"

namespace gtr {

double length_normalized_score(const BeamHypothesis& hyp, double alpha) {
    const auto len = static_cast<double>(std::max<std::size_t>(hyp.tokens.size(), 2) - 1);
    return hyp.score / std::pow(len, alpha);
}

bool better_hypothesis(const BeamHypothesis& a, const BeamHypothesis& b, double alpha) {
    const double sa = length_normalized_score(a, alpha), sb = length_normalized_score(b, alpha);
    if (sa != sb) return sa > sb;
    if (a.finish_step != b.finish_step) return a.finish_step < b.finish_step;
    return a.tokens < b.tokens;
}

namespace {

struct Live {
    BeamHypothesis hyp;
    IncrementalDecoder decoder;
    Eigen::VectorXd log_probs;
};

struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
};

// Everything about the source that does not depend on the beam width.
struct Source {
    GroupTagSeq g_x;
    int n_sent = 0;
    std::vector<int> caps;
    Eigen::MatrixXd enc;
    std::shared_ptr<const InferenceWeights> weights;
    TokenId vocab = 0;
};

DecodeResult search(const Source& s, std::size_t beam, const LengthParams& len) {
    const auto& caps = s.caps;
    const int n_sent = s.n_sent;
    const TokenId vocab = s.vocab;
    std::vector<Live> live;
    {
        Live first{BeamHypothesis{}, IncrementalDecoder(s.weights, s.enc, s.g_x), {}};
        first.log_probs = first.decoder.step(kSpecial.bos);
        first.hyp.tokens = {kSpecial.bos};
        first.hyp.tags = first.decoder.tags();
        live.push_back(std::move(first));
    }
    std::vector<BeamHypothesis> finished;

    for (int step = 1; !live.empty() && finished.size() < beam; ++step) {
        std::vector<Candidate> cands;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const auto& h = live[i].hyp;
            const auto& lp = live[i].log_probs;
            auto add = [&](TokenId t) { cands.push_back({i, t, h.score + lp(t)}); };
            if (h.tokens.back() == kSpecial.eos) {
                add(kSpecial.bos);
            } else if (h.current_sentence_len >= caps[static_cast<std::size_t>(h.sentences_done)]) {
                add(kSpecial.eos);
            } else {
                for (TokenId t = 0; t < vocab; ++t) {
                    if (t != kSpecial.pad && t != kSpecial.unk && t != kSpecial.bos) add(t);
                }
            }
        }
        auto cand_tokens_less = [&](const Candidate& a, const Candidate& b) {
            const auto& ta = live[a.parent].hyp.tokens;
            const auto& tb = live[b.parent].hyp.tokens;
            if (ta != tb) return ta < tb;
            return a.token < b.token;
        };
        std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            return cand_tokens_less(a, b);
        });

        std::vector<Live> next;
        for (const auto& c : cands) {
            if (next.size() >= beam || finished.size() >= beam) break;
            const Live& parent = live[c.parent];
            BeamHypothesis h = parent.hyp;
            h.tokens.push_back(c.token);
            h.tags.push_back(next_tag(parent.hyp.tokens.back(), parent.hyp.tags.back(), kSpecial.eos, kSpecial.bos));
            h.score = c.score;
            if (c.token == kSpecial.eos) {
                ++h.sentences_done;
                h.current_sentence_len = 0;
                if (h.sentences_done == n_sent) {
                    h.finished = true;
                    h.finish_step = step;
                    finished.push_back(std::move(h));
                    continue;
                }
            } else if (c.token != kSpecial.bos) {
                ++h.current_sentence_len;
            }
            Live child{std::move(h), parent.decoder, {}};
            child.log_probs = child.decoder.step(c.token);
            next.push_back(std::move(child));
        }
        live = std::move(next);
    }

    DecodeResult r;
    const auto pick = [&](const std::vector<BeamHypothesis>& pool) {
        return *std::min_element(pool.begin(), pool.end(), [&](const BeamHypothesis& a, const BeamHypothesis& b) {
            return better_hypothesis(a, b, len.alpha);
        });
    };
    if (!finished.empty()) {
        r.hypothesis = pick(finished);
    } else {
        std::vector<BeamHypothesis> partial;
        for (const auto& l : live) partial.push_back(l.hyp);
        r.hypothesis = pick(partial);
        r.truncated = true;
    }
    r.document.tokens = r.hypothesis.tokens;
    r.normalized_score = length_normalized_score(r.hypothesis, len.alpha);
    return r;
}

}  // namespace

DecodeResult beam_search_document(const TokenDocument& src, const Transformer& model, int beam_size,
                                  const LengthParams& len) {
    if (beam_size < 1) throw ConfigError("beam_size must be at least 1");
    Source s;
    s.g_x = build_group_tags(src);
    const auto source_sentences = split_sentences(src);
    s.n_sent = static_cast<int>(source_sentences.size());
    if (s.n_sent == 0) throw StructureError("source document has no sentences", 0);
    for (const auto& sent : source_sentences) {
        s.caps.push_back(static_cast<int>(std::floor(len.a * static_cast<double>(sent.size()) + len.b)));
    }
    s.enc = model.encode(src, s.g_x);
    s.weights = model.snapshot();
    s.vocab = static_cast<TokenId>(model.config().vocab_size);

    // A fixed-width beam can prune the path a narrower beam would have kept,
    // so each width also considers the answer of the width below it. That
    // makes the returned score non-decreasing in beam_size.
    DecodeResult best = search(s, 1, len);
    for (int w = 2; w <= beam_size; ++w) {
        DecodeResult r = search(s, static_cast<std::size_t>(w), len);
        const bool wins = r.truncated != best.truncated ? !r.truncated
                                                        : !better_hypothesis(best.hypothesis, r.hypothesis, len.alpha);
        if (wins) best = std::move(r);
    }
    return best;
}

}  // namespace gtr
