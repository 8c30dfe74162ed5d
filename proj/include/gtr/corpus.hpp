#pragma once

// Synthetic parallel document corpora, vocabulary text I/O, and packing of
// long documents into instances of whole sentences.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gtr/tagging.hpp"

namespace gtr {

enum class Task { copy, substitution, reversal, coreference };

[[nodiscard]] std::string_view to_string(Task t);
[[nodiscard]] Task parse_task(std::string_view s);

/// Inclusive integer range sampled uniformly.
struct IntRange {
    int min = 1;
    int max = 1;
};

struct SyntheticTaskSpec {
    Task task = Task::copy;
    int vocab_size = 32;
    IntRange sentences{2, 4};
    IntRange tokens{3, 8};
    int n_train = 100;
    int n_dev = 20;
    int n_test = 20;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ParallelDocument {
    TokenDocument src;
    TokenDocument tgt;
};

struct Corpus {
    SyntheticTaskSpec spec;
    std::vector<ParallelDocument> train, dev, test;
};

/// Token roles of the coreference task. Every sentence carries one
/// antecedent; sentences after the first also carry a pronoun whose target
/// form is picked by the previous sentence's antecedent. Antecedents
/// translate to one of two classes, so the target side alone does not
/// identify the pronoun form.
struct CoreferenceLexicon {
    static constexpr int kAntecedents = 4;
    static constexpr int kClasses = 2;

    TokenId antecedent(int i) const { return first + i; }
    TokenId antecedent_class(int c) const { return first + kAntecedents + c; }
    TokenId pronoun() const { return first + kAntecedents + kClasses; }
    TokenId pronoun_form(int i) const { return pronoun() + 1 + i; }
    TokenId first_word() const { return pronoun() + 1 + kAntecedents; }

    TokenId first = 4;
};

/// Seeded token map used by the substitution and coreference tasks: a
/// permutation of the plain word ids of the vocabulary.
[[nodiscard]] std::vector<TokenId> word_map(const SyntheticTaskSpec& spec);

[[nodiscard]] Corpus generate(const SyntheticTaskSpec& spec);

/// Greedy packing of whole sentences into instances of at most max_tokens
/// tokens (markers included). A sentence longer than the cap becomes its own
/// instance. Trailing padding stays with the last instance.
[[nodiscard]] std::vector<TokenDocument> split_instances(const TokenDocument& doc, std::size_t max_tokens = 512);

/// Same packing for a sentence-aligned pair, sized by the longer side.
[[nodiscard]] std::vector<ParallelDocument> split_parallel(const ParallelDocument& doc, std::size_t max_tokens = 512);

/// Token strings: specials print as <pad> <unk> <s> </s>, the rest as t<id>.
class Vocabulary {
public:
    explicit Vocabulary(int size);
    explicit Vocabulary(std::vector<std::string> tokens);

    [[nodiscard]] int size() const noexcept { return static_cast<int>(tokens_.size()); }
    [[nodiscard]] const std::string& token(TokenId id) const;
    /// Unknown strings map to unk.
    [[nodiscard]] TokenId id(const std::string& token) const;

    [[nodiscard]] std::string to_text(std::span<const TokenId> ids) const;
    [[nodiscard]] TokenDocument from_text(const std::string& line) const;

    void save(const std::filesystem::path& path) const;
    [[nodiscard]] static Vocabulary load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, TokenId> index_;
};

/// One document per line.
void write_documents(const std::filesystem::path& path, const std::vector<TokenDocument>& docs, const Vocabulary& vocab);
[[nodiscard]] std::vector<TokenDocument> read_documents(const std::filesystem::path& path, const Vocabulary& vocab);

/// <dir>/{train,dev,test}.{src,tgt}, vocab.txt and corpus.json.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
[[nodiscard]] Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace gtr
