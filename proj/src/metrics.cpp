#include "gtr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <stdexcept>

#include "gtr/errors.hpp"

namespace gtr {

namespace {

using Ngram = std::vector<TokenId>;

std::map<Ngram, long> ngram_counts(const std::vector<TokenId>& seg, int n) {
    std::map<Ngram, long> counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seg.size(); ++i) {
        ++counts[Ngram(seg.begin() + static_cast<std::ptrdiff_t>(i), seg.begin() + static_cast<std::ptrdiff_t>(i) + n)];
    }
    return counts;
}

std::vector<TokenId> strip_markers(const TokenDocument& d) {
    std::vector<TokenId> out;
    for (TokenId t : d.tokens) {
        if (t != d.bos_id && t != d.eos_id && t != d.pad_id) out.push_back(t);
    }
    return out;
}

}  // namespace

BleuReport corpus_bleu(std::span<const std::vector<TokenId>> candidates,
                       std::span<const std::vector<TokenId>> references) {
    if (candidates.size() != references.size()) throw ShapeError("candidate and reference counts differ");
    BleuReport r;
    std::array<long, kBleuOrder> ref_totals{};
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        const auto& ref = references[s];
        r.hyp_length += static_cast<long>(cand.size());
        r.ref_length += static_cast<long>(ref.size());
        for (int n = 1; n <= kBleuOrder; ++n) {
            const auto c = ngram_counts(cand, n);
            const auto rc = ngram_counts(ref, n);
            for (const auto& [g, k] : c) {
                const auto it = rc.find(g);
                const long clipped = it == rc.end() ? 0 : std::min(k, it->second);
                if (clipped > k || (it != rc.end() && clipped > it->second)) throw std::logic_error("clip overflow");
                r.matches[n - 1] += clipped;
                r.totals[n - 1] += k;
            }
            for (const auto& [g, k] : rc) ref_totals[n - 1] += k;
        }
    }
    if (r.hyp_length == 0) {
        r.score = r.ref_length == 0 ? 100.0 : 0.0;
        r.brevity_penalty = r.ref_length == 0 ? 1.0 : 0.0;
        return r;
    }
    double log_sum = 0.0;
    for (int n = 0; n < kBleuOrder; ++n) {
        double p;
        if (r.totals[n] == 0) p = ref_totals[n] == 0 ? 1.0 : kBleuEpsilon;
        else if (r.matches[n] == 0) p = kBleuEpsilon / static_cast<double>(r.totals[n]);
        else p = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
        r.precisions[n] = p;
        log_sum += std::log(p);
    }
    r.brevity_penalty = r.hyp_length > r.ref_length
                            ? 1.0
                            : std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
    r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / kBleuOrder);
    return r;
}

BleuReport d_bleu(std::span<const TokenDocument> candidates, std::span<const TokenDocument> references) {
    if (candidates.size() != references.size()) throw ShapeError("candidate and reference document counts differ");
    std::vector<std::vector<TokenId>> c, r;
    for (const auto& d : candidates) c.push_back(strip_markers(d));
    for (const auto& d : references) r.push_back(strip_markers(d));
    return corpus_bleu(c, r);
}

BleuReport s_bleu(std::span<const TokenDocument> candidates, std::span<const TokenDocument> references) {
    if (candidates.size() != references.size()) throw ShapeError("candidate and reference document counts differ");
    std::vector<std::vector<TokenId>> c, r;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto cs = split_sentences(candidates[i]);
        auto rs = split_sentences(references[i]);
        if (cs.size() != rs.size()) {
            throw StructureError("document " + std::to_string(i) + " has " + std::to_string(cs.size()) +
                                     " candidate sentences but " + std::to_string(rs.size()) + " reference sentences",
                                 i);
        }
        for (auto& s : cs) c.push_back(std::move(s));
        for (auto& s : rs) r.push_back(std::move(s));
    }
    return corpus_bleu(c, r);
}

std::string BleuReport::to_json() const {
    return nlohmann::json{{"score", score},
                          {"precisions", precisions},
                          {"matches", matches},
                          {"totals", totals},
                          {"brevity_penalty", brevity_penalty},
                          {"hyp_length", hyp_length},
                          {"ref_length", ref_length}}
        .dump();
}

std::string BleuReport::summary() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "BLEU = %.2f %.1f/%.1f/%.1f/%.1f (BP = %.3f, hyp_len = %ld, ref_len = %ld)", score,
                  100 * precisions[0], 100 * precisions[1], 100 * precisions[2], 100 * precisions[3], brevity_penalty,
                  hyp_length, ref_length);
    return buf;
}

}  // namespace gtr
