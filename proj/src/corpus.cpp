#include "gtr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "gtr/errors.hpp"

namespace gtr {

std::string_view to_string(Task t) {
    switch (t) {
        case Task::copy: return "copy";
        case Task::substitution: return "substitution";
        case Task::reversal: return "reversal";
        case Task::coreference: return "coreference";
    }
    return "copy";
}

Task parse_task(std::string_view s) {
    for (Task t : {Task::copy, Task::substitution, Task::reversal, Task::coreference}) {
        if (s == to_string(t)) return t;
    }
    throw ConfigError("unknown task: " + std::string(s));
}

namespace {

TokenId first_word(const SyntheticTaskSpec& spec) {
    return spec.task == Task::coreference ? CoreferenceLexicon{}.first_word() : kSpecial.eos + 1;
}

int draw(std::mt19937_64& rng, IntRange r) { return std::uniform_int_distribution<int>(r.min, r.max)(rng); }

}  // namespace

void SyntheticTaskSpec::validate() const {
    if (sentences.min < 1 || sentences.max < sentences.min) throw ConfigError("sentence range must be 1 <= min <= max");
    if (tokens.min < 0 || tokens.max < tokens.min) throw ConfigError("token range must be 0 <= min <= max");
    if (n_train < 0 || n_dev < 0 || n_test < 0) throw ConfigError("split sizes must be non-negative");
    if (vocab_size <= first_word(*this) + 1) {
        throw ConfigError("vocab_size " + std::to_string(vocab_size) + " leaves fewer than two plain words for task " +
                          std::string(to_string(task)));
    }
    if (task == Task::coreference && tokens.min < 2) throw ConfigError("coreference sentences need at least 2 tokens");
}

std::vector<TokenId> word_map(const SyntheticTaskSpec& spec) {
    const TokenId lo = first_word(spec);
    std::vector<TokenId> map(static_cast<std::size_t>(spec.vocab_size));
    std::iota(map.begin(), map.end(), 0);
    // Separate stream from document sampling so the map is a function of the seed alone.
    std::mt19937_64 rng(spec.seed ^ 0x5eed5eedULL);
    std::shuffle(map.begin() + lo, map.end(), rng);
    return map;
}

namespace {

ParallelDocument make_document(const SyntheticTaskSpec& spec, const std::vector<TokenId>& map, std::mt19937_64& rng) {
    const CoreferenceLexicon lex;
    const TokenId lo = first_word(spec);
    std::uniform_int_distribution<TokenId> word(lo, spec.vocab_size - 1);
    std::uniform_int_distribution<int> antecedent(0, CoreferenceLexicon::kAntecedents - 1);

    ParallelDocument d;
    const int n_sent = draw(rng, spec.sentences);
    int prev_antecedent = -1;
    for (int s = 0; s < n_sent; ++s) {
        const int n = draw(rng, spec.tokens);
        std::vector<TokenId> src(static_cast<std::size_t>(n));
        for (auto& t : src) t = word(rng);
        std::vector<TokenId> tgt;
        switch (spec.task) {
            case Task::copy: tgt = src; break;
            case Task::substitution:
                for (TokenId t : src) tgt.push_back(map[static_cast<std::size_t>(t)]);
                break;
            case Task::reversal: tgt.assign(src.rbegin(), src.rend()); break;
            case Task::coreference: {
                std::uniform_int_distribution<int> pos(0, n - 1);
                const int a = antecedent(rng);
                const int a_pos = pos(rng);
                src[static_cast<std::size_t>(a_pos)] = lex.antecedent(a);
                int p_pos = -1;
                if (prev_antecedent >= 0) {
                    do p_pos = pos(rng);
                    while (p_pos == a_pos);
                    src[static_cast<std::size_t>(p_pos)] = lex.pronoun();
                }
                for (int i = 0; i < n; ++i) {
                    const TokenId t = src[static_cast<std::size_t>(i)];
                    if (i == a_pos) tgt.push_back(lex.antecedent_class(a * CoreferenceLexicon::kClasses /
                                                                       CoreferenceLexicon::kAntecedents));
                    else if (i == p_pos) tgt.push_back(lex.pronoun_form(prev_antecedent));
                    else tgt.push_back(map[static_cast<std::size_t>(t)]);
                }
                prev_antecedent = a;
                break;
            }
        }
        for (auto* side : {&d.src.tokens, &d.tgt.tokens}) side->push_back(kSpecial.bos);
        d.src.tokens.insert(d.src.tokens.end(), src.begin(), src.end());
        d.tgt.tokens.insert(d.tgt.tokens.end(), tgt.begin(), tgt.end());
        for (auto* side : {&d.src.tokens, &d.tgt.tokens}) side->push_back(kSpecial.eos);
    }
    return d;
}

}  // namespace

Corpus generate(const SyntheticTaskSpec& spec) {
    spec.validate();
    const auto map = word_map(spec);
    std::mt19937_64 rng(spec.seed);
    Corpus c;
    c.spec = spec;
    for (auto [split, n] : {std::pair{&c.train, spec.n_train}, std::pair{&c.dev, spec.n_dev}, std::pair{&c.test, spec.n_test}}) {
        split->reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) split->push_back(make_document(spec, map, rng));
    }
    return c;
}

namespace {

struct SentenceSpan {
    std::size_t begin, end;  // [begin, end) including markers
};

std::vector<SentenceSpan> sentence_spans(const TokenDocument& doc, std::size_t& content_end) {
    const GroupTagSeq tags = build_group_tags(doc);
    std::vector<SentenceSpan> spans;
    content_end = 0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i] == 0) continue;
        if (i == 0 || tags[i - 1] != tags[i]) spans.push_back({i, i + 1});
        spans.back().end = i + 1;
        content_end = i + 1;
    }
    return spans;
}

TokenDocument slice(const TokenDocument& doc, std::size_t begin, std::size_t end) {
    TokenDocument out = doc;
    out.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                      doc.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

/// Greedy grouping of sentence indices given each sentence's packing size.
std::vector<std::pair<std::size_t, std::size_t>> pack(const std::vector<std::size_t>& sizes, std::size_t cap) {
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    std::size_t start = 0, used = 0;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        if (s > start && used + sizes[s] > cap) {
            groups.emplace_back(start, s);
            start = s;
            used = 0;
        }
        used += sizes[s];
    }
    if (start < sizes.size()) groups.emplace_back(start, sizes.size());
    return groups;
}

}  // namespace

std::vector<TokenDocument> split_instances(const TokenDocument& doc, std::size_t max_tokens) {
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    std::size_t content_end = 0;
    const auto spans = sentence_spans(doc, content_end);
    if (spans.empty()) return {doc};
    std::vector<std::size_t> sizes;
    for (const auto& sp : spans) sizes.push_back(sp.end - sp.begin);
    std::vector<TokenDocument> out;
    const auto groups = pack(sizes, max_tokens);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::size_t end = g + 1 == groups.size() ? doc.tokens.size() : spans[groups[g].second - 1].end;
        out.push_back(slice(doc, spans[groups[g].first].begin, end));
    }
    return out;
}

std::vector<ParallelDocument> split_parallel(const ParallelDocument& doc, std::size_t max_tokens) {
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    std::size_t src_end = 0, tgt_end = 0;
    const auto src = sentence_spans(doc.src, src_end);
    const auto tgt = sentence_spans(doc.tgt, tgt_end);
    if (src.size() != tgt.size()) throw StructureError("source and target sentence counts differ", 0);
    if (src.empty()) return {doc};
    std::vector<std::size_t> sizes;
    for (std::size_t s = 0; s < src.size(); ++s) {
        sizes.push_back(std::max(src[s].end - src[s].begin, tgt[s].end - tgt[s].begin));
    }
    std::vector<ParallelDocument> out;
    const auto groups = pack(sizes, max_tokens);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const bool last = g + 1 == groups.size();
        const auto [first, stop] = groups[g];
        out.push_back({slice(doc.src, src[first].begin, last ? doc.src.tokens.size() : src[stop - 1].end),
                       slice(doc.tgt, tgt[first].begin, last ? doc.tgt.tokens.size() : tgt[stop - 1].end)});
    }
    return out;
}

Vocabulary::Vocabulary(int size) {
    if (size <= kSpecial.eos) throw ConfigError("vocabulary must hold the special tokens");
    std::vector<std::string> tokens{"<pad>", "<unk>", "<s>", "</s>"};
    for (int i = 4; i < size; ++i) tokens.push_back("t" + std::to_string(i));
    *this = Vocabulary(std::move(tokens));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw ConfigError("duplicate vocabulary entry: " + tokens_[i]);
        }
    }
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || id >= size()) throw ShapeError("token id " + std::to_string(id) + " outside the vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kSpecial.unk : it->second;
}

std::string Vocabulary::to_text(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

TokenDocument Vocabulary::from_text(const std::string& line) const {
    TokenDocument d;
    std::istringstream in(line);
    for (std::string tok; in >> tok;) d.tokens.push_back(id(tok));
    return d;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void write_documents(const std::filesystem::path& path, const std::vector<TokenDocument>& docs, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& d : docs) out << vocab.to_text(d.tokens) << '\n';
}

std::vector<TokenDocument> read_documents(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<TokenDocument> docs;
    for (std::string line; std::getline(in, line);) docs.push_back(vocab.from_text(line));
    return docs;
}

namespace {

nlohmann::json spec_json(const SyntheticTaskSpec& s) {
    return {{"task", std::string(to_string(s.task))},
            {"vocab_size", s.vocab_size},
            {"sentences", {s.sentences.min, s.sentences.max}},
            {"tokens", {s.tokens.min, s.tokens.max}},
            {"n_train", s.n_train},
            {"n_dev", s.n_dev},
            {"n_test", s.n_test},
            {"seed", s.seed}};
}

SyntheticTaskSpec spec_from_json(const nlohmann::json& j) {
    SyntheticTaskSpec s;
    s.task = parse_task(j.at("task").get<std::string>());
    s.vocab_size = j.at("vocab_size").get<int>();
    s.sentences = {j.at("sentences")[0].get<int>(), j.at("sentences")[1].get<int>()};
    s.tokens = {j.at("tokens")[0].get<int>(), j.at("tokens")[1].get<int>()};
    s.n_train = j.at("n_train").get<int>();
    s.n_dev = j.at("n_dev").get<int>();
    s.n_test = j.at("n_test").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

}  // namespace

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    std::filesystem::create_directories(dir);
    const Vocabulary vocab(corpus.spec.vocab_size);
    vocab.save(dir / "vocab.txt");
    for (auto [name, split] : {std::pair{"train", &corpus.train}, std::pair{"dev", &corpus.dev}, std::pair{"test", &corpus.test}}) {
        std::vector<TokenDocument> src, tgt;
        for (const auto& d : *split) {
            src.push_back(d.src);
            tgt.push_back(d.tgt);
        }
        write_documents(dir / (std::string(name) + ".src"), src, vocab);
        write_documents(dir / (std::string(name) + ".tgt"), tgt, vocab);
    }
    std::ofstream(dir / "corpus.json") << spec_json(corpus.spec).dump(2) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
    std::ifstream in(dir / "corpus.json");
    if (!in) throw std::runtime_error("no corpus.json in " + dir.string());
    Corpus c;
    c.spec = spec_from_json(nlohmann::json::parse(in));
    const Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
    for (auto [name, split] : {std::pair{"train", &c.train}, std::pair{"dev", &c.dev}, std::pair{"test", &c.test}}) {
        const auto src = read_documents(dir / (std::string(name) + ".src"), vocab);
        const auto tgt = read_documents(dir / (std::string(name) + ".tgt"), vocab);
        if (src.size() != tgt.size()) throw StructureError(std::string(name) + " source/target line counts differ", 0);
        for (std::size_t i = 0; i < src.size(); ++i) split->push_back({src[i], tgt[i]});
    }
    return c;
}

}  // namespace gtr
