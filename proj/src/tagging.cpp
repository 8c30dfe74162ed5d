#include "gtr/tagging.hpp"

namespace gtr {

GroupTagSeq build_group_tags(const TokenDocument& doc) {
    GroupTagSeq tags(doc.tokens.size(), 0);
    GroupTag sentence = 0;
    bool open = false;
    bool padding = false;
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        const TokenId t = doc.tokens[i];
        if (t == doc.pad_id) {
            if (open) throw StructureError("padding inside a sentence", i);
            padding = true;
            continue;
        }
        if (padding) throw StructureError("token after trailing padding", i);
        if (t == doc.bos_id) {
            if (open) throw StructureError("sentence begin before previous sentence ended", i);
            open = true;
            ++sentence;
        } else if (t == doc.eos_id) {
            if (!open) throw StructureError("sentence end without matching begin", i);
            tags[i] = sentence;
            open = false;
            continue;
        } else if (!open) {
            throw StructureError("token outside any sentence", i);
        }
        tags[i] = sentence;
    }
    if (open) throw StructureError("unterminated sentence at end of document", doc.tokens.size());
    return tags;
}

GroupTagSeq incremental_tags(std::span<const TokenId> tokens, const SpecialTokens& special) {
    GroupTagSeq tags;
    tags.reserve(tokens.size());
    TokenId prev_token = special.pad;
    GroupTag prev_tag = 0;
    for (const TokenId t : tokens) {
        if (t == special.pad) {
            tags.push_back(0);
            continue;
        }
        prev_tag = next_tag(prev_token, prev_tag, special.eos, special.bos);
        prev_token = t;
        tags.push_back(prev_tag);
    }
    return tags;
}

void validate_group_tags(std::span<const GroupTag> tags) {
    GroupTag prev = 0;
    bool seen_pad = false;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const GroupTag g = tags[i];
        if (g < 0) throw StructureError("negative group tag", i);
        if (g == 0) {
            seen_pad = true;
            continue;
        }
        if (seen_pad) throw StructureError("non-zero tag after padding", i);
        if (g != prev && g != prev + 1) throw StructureError("group tags must start at 1 and step by 1", i);
        prev = g;
    }
}

std::size_t sentence_count(const TokenDocument& doc) {
    const auto tags = build_group_tags(doc);
    GroupTag max_tag = 0;
    for (const auto g : tags) max_tag = std::max(max_tag, g);
    return static_cast<std::size_t>(max_tag);
}

std::vector<std::vector<TokenId>> split_sentences(const TokenDocument& doc) {
    const auto tags = build_group_tags(doc);
    std::vector<std::vector<TokenId>> out;
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
        const TokenId t = doc.tokens[i];
        if (t == doc.bos_id) {
            out.emplace_back();
        } else if (t != doc.eos_id && tags[i] != 0) {
            out.back().push_back(t);
        }
    }
    return out;
}

TokenDocument join_sentences(const std::vector<std::vector<TokenId>>& sentences) {
    TokenDocument doc;
    for (const auto& s : sentences) {
        doc.tokens.push_back(doc.bos_id);
        doc.tokens.insert(doc.tokens.end(), s.begin(), s.end());
        doc.tokens.push_back(doc.eos_id);
    }
    return doc;
}

}  // namespace gtr
