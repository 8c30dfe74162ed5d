#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gtr {

using TokenId = std::int32_t;

/// Group tag of a token: the 1-based index of its sentence, 0 for padding.
using GroupTag = std::int32_t;
using GroupTagSeq = std::vector<GroupTag>;

/// Reserved ids shared by every vocabulary in the project.
struct SpecialTokens {
    TokenId pad = 0;
    TokenId unk = 1;
    TokenId bos = 2;
    TokenId eos = 3;

    [[nodiscard]] constexpr bool is_marker(TokenId t) const noexcept { return t == bos || t == eos; }
    [[nodiscard]] constexpr bool is_special(TokenId t) const noexcept {
        return t == pad || t == unk || t == bos || t == eos;
    }
};

inline constexpr SpecialTokens kSpecial{};

/// A tokenized document: sentences delimited by bos ... eos, optionally
/// followed by trailing padding.
struct TokenDocument {
    std::vector<TokenId> tokens;
    TokenId bos_id = kSpecial.bos;
    TokenId eos_id = kSpecial.eos;
    TokenId pad_id = kSpecial.pad;

    [[nodiscard]] std::size_t size() const noexcept { return tokens.size(); }
    [[nodiscard]] bool empty() const noexcept { return tokens.empty(); }
};

/// Raised for malformed documents or tag sequences. `position()` names the
/// offending token index.
class StructureError : public std::runtime_error {
public:
    StructureError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " (at position " + std::to_string(position) + ")"), position_(position) {}

    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Tags for a complete document: token i gets k iff it lies in the k-th
/// bos...eos span (markers inclusive); padding gets 0.
/// Throws StructureError on unbalanced markers or tokens outside any span.
[[nodiscard]] GroupTagSeq build_group_tags(const TokenDocument& doc);

/// Tag of the next position given the previous token and its tag.
[[nodiscard]] constexpr GroupTag next_tag(TokenId prev_token, GroupTag prev_tag, TokenId eos_id,
                                          TokenId /*bos_id*/) noexcept {
    if (prev_tag == 0) return 1;
    if (prev_token == eos_id) return prev_tag + 1;
    return prev_tag;
}

/// Left fold of next_tag over a (possibly incomplete) token prefix. Padding
/// tokens get tag 0 and do not advance the running tag.
[[nodiscard]] GroupTagSeq incremental_tags(std::span<const TokenId> tokens, const SpecialTokens& special = kSpecial);

/// Checks the GroupTagSeq invariants: non-zero tags start at 1, never
/// decrease, and grow by at most 1 between neighbours; zeros only trail.
void validate_group_tags(std::span<const GroupTag> tags);

/// Number of sentences (bos...eos spans) in a well-formed document.
[[nodiscard]] std::size_t sentence_count(const TokenDocument& doc);

/// Content tokens (markers and padding removed) of each sentence in order.
[[nodiscard]] std::vector<std::vector<TokenId>> split_sentences(const TokenDocument& doc);

/// Builds a document from per-sentence content tokens, adding the markers.
[[nodiscard]] TokenDocument join_sentences(const std::vector<std::vector<TokenId>>& sentences);

}  // namespace gtr
