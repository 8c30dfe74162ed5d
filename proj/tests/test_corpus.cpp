#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "gtr/corpus.hpp"
#include "gtr/errors.hpp"
#include "test_util.hpp"

namespace gtr {
namespace {

SyntheticTaskSpec spec_for(Task t, std::uint64_t seed = 3) {
    SyntheticTaskSpec s;
    s.task = t;
    s.vocab_size = 30;
    s.sentences = {1, 6};
    s.tokens = {2, 9};
    s.n_train = 60;
    s.n_dev = 10;
    s.n_test = 10;
    s.seed = seed;
    return s;
}

std::vector<ParallelDocument> all_docs(const Corpus& c) {
    std::vector<ParallelDocument> out = c.train;
    out.insert(out.end(), c.dev.begin(), c.dev.end());
    out.insert(out.end(), c.test.begin(), c.test.end());
    return out;
}

TEST(Generate, CopyTargetsEqualSources) {
    for (const auto& d : all_docs(generate(spec_for(Task::copy)))) EXPECT_EQ(d.src.tokens, d.tgt.tokens);
}

TEST(Generate, SubstitutionAppliesTheMapEverywhere) {
    const auto spec = spec_for(Task::substitution);
    const auto map = word_map(spec);
    std::vector<TokenId> sorted(map.begin() + 4, map.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], static_cast<TokenId>(i + 4));  // bijection
    for (const auto& d : all_docs(generate(spec))) {
        ASSERT_EQ(d.src.tokens.size(), d.tgt.tokens.size());
        for (std::size_t i = 0; i < d.src.tokens.size(); ++i) {
            const TokenId s = d.src.tokens[i];
            EXPECT_EQ(d.tgt.tokens[i], kSpecial.is_marker(s) ? s : map[static_cast<std::size_t>(s)]);
        }
    }
}

TEST(Generate, ReversalReversesEachSentence) {
    for (const auto& d : all_docs(generate(spec_for(Task::reversal)))) {
        auto src = split_sentences(d.src);
        const auto tgt = split_sentences(d.tgt);
        ASSERT_EQ(src.size(), tgt.size());
        for (std::size_t s = 0; s < src.size(); ++s) {
            std::reverse(src[s].begin(), src[s].end());
            EXPECT_EQ(src[s], tgt[s]);
        }
    }
}

/// Rule-based translator for the coreference task written against the id
/// layout directly: antecedents 4..7, classes 8..9, pronoun 10, pronoun
/// forms 11..14, plain words from 15.
std::vector<TokenId> coreference_oracle(const std::vector<TokenId>& src, const std::vector<TokenId>& map) {
    std::vector<TokenId> out;
    int previous = -1, current = -1;
    for (const TokenId t : src) {
        if (t == kSpecial.bos) {
            previous = current;
            current = -1;
            out.push_back(t);
        } else if (t == kSpecial.eos) {
            out.push_back(t);
        } else if (t >= 4 && t <= 7) {
            current = t - 4;
            out.push_back(8 + current / 2);
        } else if (t == 10) {
            out.push_back(previous < 0 ? kSpecial.unk : 11 + previous);
        } else {
            out.push_back(map[static_cast<std::size_t>(t)]);
        }
    }
    return out;
}

TEST(Generate, CoreferenceMatchesRuleBasedOracle) {
    const auto spec = spec_for(Task::coreference);
    const auto map = word_map(spec);
    const CoreferenceLexicon lex;
    EXPECT_EQ(lex.antecedent(0), 4);
    EXPECT_EQ(lex.pronoun(), 10);
    EXPECT_EQ(lex.first_word(), 15);
    long correct = 0, total = 0;
    for (const auto& d : all_docs(generate(spec))) {
        const auto out = coreference_oracle(d.src.tokens, map);
        ASSERT_EQ(out.size(), d.tgt.tokens.size());
        for (std::size_t i = 0; i < out.size(); ++i) correct += out[i] == d.tgt.tokens[i];
        total += static_cast<long>(out.size());

        const auto sents = split_sentences(d.src);
        for (std::size_t s = 0; s < sents.size(); ++s) {
            EXPECT_EQ(std::count_if(sents[s].begin(), sents[s].end(), [](TokenId t) { return t >= 4 && t <= 7; }), 1);
            EXPECT_EQ(std::count(sents[s].begin(), sents[s].end(), 10), s == 0 ? 0 : 1);
        }
    }
    EXPECT_EQ(correct, total);
}

TEST(Generate, CoreferencePronounNeedsSourceContext) {
    // Antecedents 0 and 1 share a target class but select different pronoun
    // forms, so the target side of sentence k-1 cannot decide sentence k.
    const CoreferenceLexicon lex;
    EXPECT_EQ(lex.antecedent_class(0 * 2 / 4), lex.antecedent_class(1 * 2 / 4));
    EXPECT_NE(lex.pronoun_form(0), lex.pronoun_form(1));
}

TEST(Generate, SeedDeterministic) {
    const auto a = generate(spec_for(Task::coreference, 5));
    const auto b = generate(spec_for(Task::coreference, 5));
    const auto c = generate(spec_for(Task::coreference, 6));
    ASSERT_EQ(a.train.size(), b.train.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].src.tokens, b.train[i].src.tokens);
        EXPECT_EQ(a.train[i].tgt.tokens, b.train[i].tgt.tokens);
        any_diff = any_diff || a.train[i].src.tokens != c.train[i].src.tokens;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Generate, SpecValidation) {
    auto s = spec_for(Task::coreference);
    s.vocab_size = 16;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec_for(Task::copy);
    s.sentences = {3, 2};
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec_for(Task::coreference);
    s.tokens = {1, 4};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW((void)parse_task("translation"), ConfigError);
}

TokenDocument doc_with_sentence_lengths(const std::vector<int>& content) {
    TokenDocument d;
    for (int n : content) {
        d.tokens.push_back(kSpecial.bos);
        d.tokens.insert(d.tokens.end(), static_cast<std::size_t>(n), 9);
        d.tokens.push_back(kSpecial.eos);
    }
    return d;
}

TEST(SplitInstances, Examples) {
    EXPECT_EQ(split_instances(doc_with_sentence_lengths({30, 30, 34}), 512).size(), 1u);  // 100 tokens
    const auto two = split_instances(doc_with_sentence_lengths({298, 298}), 512);        // 300 + 300
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].tokens.size(), 300u);
    const auto big = split_instances(doc_with_sentence_lengths({598}), 512);
    ASSERT_EQ(big.size(), 1u);
    EXPECT_EQ(big[0].tokens.size(), 600u);
    const auto mixed = split_instances(doc_with_sentence_lengths({10, 598, 10}), 512);
    EXPECT_EQ(mixed.size(), 3u);
}

TEST(SplitInstances, ConcatenationReproducesDocument) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> cap(1, 40);
    for (int trial = 0; trial < 300; ++trial) {
        const auto doc = testing::random_document(rng, 1 + trial % 7, 12, trial % 3);
        const std::size_t c = cap(rng);
        const auto parts = split_instances(doc, c);
        std::vector<TokenId> joined;
        for (const auto& p : parts) {
            EXPECT_NO_THROW((void)build_group_tags(p));
            // only single oversized sentences may exceed the cap; trailing pad does not count
            const auto content = static_cast<std::size_t>(std::count_if(
                p.tokens.begin(), p.tokens.end(), [](TokenId t) { return t != kSpecial.pad; }));
            if (content > c) EXPECT_EQ(sentence_count(p), 1u);
            joined.insert(joined.end(), p.tokens.begin(), p.tokens.end());
        }
        EXPECT_EQ(joined, doc.tokens);
    }
}

TEST(SplitParallel, KeepsSidesAligned) {
    const auto corpus = generate(spec_for(Task::reversal));
    for (const auto& d : corpus.train) {
        const auto parts = split_parallel(d, 12);
        std::vector<TokenId> src, tgt;
        for (const auto& p : parts) {
            EXPECT_EQ(sentence_count(p.src), sentence_count(p.tgt));
            src.insert(src.end(), p.src.tokens.begin(), p.src.tokens.end());
            tgt.insert(tgt.end(), p.tgt.tokens.begin(), p.tgt.tokens.end());
        }
        EXPECT_EQ(src, d.src.tokens);
        EXPECT_EQ(tgt, d.tgt.tokens);
    }
    ParallelDocument bad{doc_with_sentence_lengths({1, 2}), doc_with_sentence_lengths({1})};
    EXPECT_THROW((void)split_parallel(bad, 10), StructureError);
}

TEST(Vocabulary, TextRoundTrip) {
    const Vocabulary v(20);
    EXPECT_EQ(v.token(kSpecial.bos), "<s>");
    EXPECT_EQ(v.token(kSpecial.eos), "</s>");
    EXPECT_EQ(v.token(kSpecial.pad), "<pad>");
    EXPECT_EQ(v.id("t7"), 7);
    EXPECT_EQ(v.id("nonsense"), kSpecial.unk);
    const std::vector<TokenId> ids{2, 5, 19, 3, 0};
    EXPECT_EQ(v.to_text(ids), "<s> t5 t19 </s> <pad>");
    EXPECT_EQ(v.from_text(v.to_text(ids)).tokens, ids);
    EXPECT_THROW((void)v.token(20), ShapeError);
    EXPECT_THROW(Vocabulary(std::vector<std::string>{"a", "a"}), ConfigError);
}

TEST(CorpusFiles, WriteThenReadRoundTrips) {
    const auto corpus = generate(spec_for(Task::coreference));
    const auto dir = std::filesystem::temp_directory_path() / "gtr_corpus_roundtrip";
    std::filesystem::remove_all(dir);
    write_corpus(dir, corpus);
    const auto back = read_corpus(dir);
    std::filesystem::remove_all(dir);
    EXPECT_EQ(back.spec.seed, corpus.spec.seed);
    EXPECT_EQ(back.spec.task, corpus.spec.task);
    EXPECT_EQ(back.spec.tokens.max, corpus.spec.tokens.max);
    ASSERT_EQ(back.train.size(), corpus.train.size());
    ASSERT_EQ(back.test.size(), corpus.test.size());
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        EXPECT_EQ(back.train[i].src.tokens, corpus.train[i].src.tokens);
        EXPECT_EQ(back.train[i].tgt.tokens, corpus.train[i].tgt.tokens);
    }
}

}  // namespace
}  // namespace gtr
