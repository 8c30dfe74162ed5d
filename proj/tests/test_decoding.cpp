#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gtr/decoding.hpp"
#include "gtr/errors.hpp"
#include "gtr/metrics.hpp"
#include "gtr/training.hpp"
#include "test_util.hpp"

namespace gtr {
namespace {

ModelConfig small(Variant v = Variant::gtransformer) {
    ModelConfig c;
    c.vocab_size = 12;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 24;
    c.k_combined = 1;
    c.variant = v;
    c.dropout = 0.0;
    return c;
}

/// Greedy decoding that re-runs the full decoder on the whole prefix at
/// every step instead of using the key/value cache.
std::vector<TokenId> greedy_by_recompute(const Transformer& model, const TokenDocument& src, const LengthParams& len) {
    const auto g_x = build_group_tags(src);
    Tape enc_tape(false);
    ForwardContext ctx;
    const Eigen::MatrixXd enc = model.encode(enc_tape, src.tokens, g_x, ctx).value();
    std::vector<int> caps;
    for (const auto& s : split_sentences(src)) caps.push_back(static_cast<int>(std::floor(len.a * static_cast<double>(s.size()) + len.b)));

    std::vector<TokenId> out{kSpecial.bos};
    std::size_t sentence = 0;
    int in_sentence = 0;
    while (sentence < caps.size()) {
        Tape tape(false);
        const Var e = tape.constant(enc);
        const Eigen::MatrixXd z = model.decode(tape, e, g_x, out, incremental_tags(out), ctx).value();
        const Eigen::RowVectorXd last = z.row(z.rows() - 1);
        TokenId next;
        if (out.back() == kSpecial.eos) {
            next = kSpecial.bos;
        } else if (in_sentence >= caps[sentence]) {
            next = kSpecial.eos;
        } else {
            double best = -std::numeric_limits<double>::infinity();
            next = kSpecial.eos;
            for (TokenId t = 0; t < static_cast<TokenId>(last.size()); ++t) {
                if (t == kSpecial.pad || t == kSpecial.unk || t == kSpecial.bos) continue;
                if (last(t) > best) {
                    best = last(t);
                    next = t;
                }
            }
        }
        out.push_back(next);
        if (next == kSpecial.eos) {
            ++sentence;
            in_sentence = 0;
        } else if (next != kSpecial.bos) {
            ++in_sentence;
        }
    }
    return out;
}

double sum_gold(const Transformer& model, const TokenDocument& src, const TokenDocument& hyp) {
    const auto lp = gold_log_probs(model, src, hyp);
    return std::accumulate(lp.begin(), lp.end(), 0.0);
}

TEST(Beam, WidthOneIsGreedy) {
    std::mt19937_64 rng(31);
    for (Variant v : {Variant::gtransformer, Variant::baseline}) {
        const Transformer model(small(v), 8);
        for (int trial = 0; trial < 6; ++trial) {
            const auto src = testing::random_document(rng, 1 + trial % 3, 4, 0, 12);
            const LengthParams len{1.0, 2.0, 1.0};
            const auto r = beam_search_document(src, model, 1, len);
            EXPECT_EQ(r.document.tokens, greedy_by_recompute(model, src, len));
            EXPECT_FALSE(r.truncated);
        }
    }
}

TEST(Beam, OutputShapeAndScores) {
    std::mt19937_64 rng(32);
    const Transformer model(small(), 9);
    for (int trial = 0; trial < 10; ++trial) {
        const auto src = testing::random_document(rng, 1 + trial % 4, 5, 0, 12);
        for (int beam : {1, 3}) {
            const auto r = beam_search_document(src, model, beam, LengthParams{1.0, 3.0, 1.0});
            EXPECT_EQ(sentence_count(r.document), sentence_count(src));
            EXPECT_EQ(r.hypothesis.tags, incremental_tags(r.document.tokens));
            EXPECT_EQ(r.hypothesis.tags, build_group_tags(r.document));
            // cumulative score agrees with a teacher-forced pass over the output
            EXPECT_NEAR(r.hypothesis.score, sum_gold(model, src, r.document), 1e-8);
            EXPECT_NEAR(r.normalized_score, length_normalized_score(r.hypothesis, 1.0), 0.0);
            const auto sent_out = split_sentences(r.document);
            const auto sent_in = split_sentences(src);
            for (std::size_t s = 0; s < sent_in.size(); ++s) {
                EXPECT_LE(sent_out[s].size(), sent_in[s].size() + 3);
            }
        }
    }
}

TEST(Beam, ScoreNeverDropsAsWidthGrows) {
    std::mt19937_64 rng(33);
    const Transformer model(small(), 10);
    for (int trial = 0; trial < 12; ++trial) {
        const auto src = testing::random_document(rng, 1 + trial % 3, 4, 0, 12);
        const LengthParams len{1.0, 2.0, 1.0};
        double prev = -std::numeric_limits<double>::infinity();
        for (int beam = 1; beam <= 6; ++beam) {
            const auto r = beam_search_document(src, model, beam, len);
            EXPECT_GE(r.normalized_score, prev) << "trial " << trial << " beam " << beam;
            prev = r.normalized_score;
        }
    }
}

TEST(Beam, ZeroCapForcesEmptySentences) {
    const Transformer model(small(), 9);
    TokenDocument src;
    src.tokens = {2, 5, 6, 3, 2, 7, 3};
    const auto r = beam_search_document(src, model, 4, LengthParams{0.0, 0.0, 1.0});
    EXPECT_EQ(r.document.tokens, (std::vector<TokenId>{2, 3, 2, 3}));
}

TEST(Beam, RejectsBadInput) {
    const Transformer model(small(), 9);
    TokenDocument src;
    src.tokens = {2, 5, 3};
    EXPECT_THROW((void)beam_search_document(src, model, 0), ConfigError);
    TokenDocument empty;
    EXPECT_THROW((void)beam_search_document(empty, model, 2), StructureError);
}

BeamHypothesis hyp(std::size_t generated, double score, int finish = 0) {
    BeamHypothesis h;
    h.tokens.assign(generated + 1, 4);
    h.tokens[0] = kSpecial.bos;
    h.score = score;
    h.finish_step = finish;
    return h;
}

TEST(LengthNormalisation, Cases) {
    EXPECT_DOUBLE_EQ(length_normalized_score(hyp(5, -3.0), 0.0), -3.0);
    EXPECT_DOUBLE_EQ(length_normalized_score(hyp(1, -3.0), 1.0), -3.0);
    EXPECT_DOUBLE_EQ(length_normalized_score(hyp(0, -3.0), 1.0), -3.0);  // length floors at 1
    EXPECT_DOUBLE_EQ(length_normalized_score(hyp(4, -3.0), 0.5), -1.5);

    // raw score prefers the short hypothesis; per-token score the long one
    const auto short_h = hyp(2, -2.0), long_h = hyp(4, -3.0);
    EXPECT_TRUE(better_hypothesis(short_h, long_h, 0.0));
    EXPECT_TRUE(better_hypothesis(long_h, short_h, 1.0));

    // ties fall back to the earlier finish, then token order
    auto a = hyp(3, -3.0, 5), b = hyp(3, -3.0, 7);
    EXPECT_TRUE(better_hypothesis(a, b, 1.0));
    b.finish_step = 5;
    b.tokens.back() = 5;
    EXPECT_TRUE(better_hypothesis(a, b, 1.0));
    EXPECT_FALSE(better_hypothesis(b, a, 1.0));
}

TEST(Beam, TrainedCopyModelReproducesSource) {
    SyntheticTaskSpec spec;
    spec.task = Task::copy;
    spec.vocab_size = 12;
    spec.sentences = {1, 3};
    spec.tokens = {1, 4};
    spec.n_train = 1000;
    spec.n_dev = 20;
    spec.n_test = 20;
    spec.seed = 2;
    const auto corpus = generate(spec);
    ModelConfig mc = small();
    mc.n_heads = 4;
    mc.d_model = 64;
    mc.d_ff = 128;
    Transformer model(mc, 3);
    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.warmup_steps = 20;
    tc.max_steps = 600;
    tc.batch_tokens = 150;
    tc.eval_every = 200;
    tc.patience = 1000;
    tc.entropy_every = 0;
    tc.seed = 5;
    (void)train(model, corpus, Regime::random_init_gtrans, tc);

    std::vector<TokenDocument> hyps, refs;
    int exact = 0;
    for (const auto& d : corpus.test) {
        const auto r = beam_search_document(d.src, model, 4);
        exact += r.document.tokens == d.src.tokens;
        hyps.push_back(r.document);
        refs.push_back(d.tgt);
        EXPECT_EQ(sentence_count(r.document), sentence_count(d.src));
    }
    EXPECT_GE(exact, 16) << "of " << corpus.test.size();
    EXPECT_GT(d_bleu(hyps, refs).score, 90.0);
}

}  // namespace
}  // namespace gtr
