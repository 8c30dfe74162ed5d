#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gtr/tagging.hpp"

namespace gtr {

enum class AttentionSite { encoder_self, decoder_self, cross };

/// Which half of a (possibly combined) attention produced the weights.
enum class AttentionBranch { local, global };

[[nodiscard]] std::string_view to_string(AttentionSite site);
[[nodiscard]] std::string_view to_string(AttentionBranch branch);
[[nodiscard]] AttentionSite parse_site(std::string_view s);
[[nodiscard]] AttentionBranch parse_branch(std::string_view s);

/// Post-softmax weights of one head at one site and layer.
struct AttentionRecord {
    AttentionSite site = AttentionSite::encoder_self;
    AttentionBranch branch = AttentionBranch::local;
    int layer = 0;
    int head = 0;
    GroupTagSeq query_tags;
    GroupTagSeq key_tags;
    Eigen::MatrixXd weights;  // [len_q x len_k]
};

struct AttentionTrace {
    std::vector<AttentionRecord> records;
};

/// Line-delimited JSON, one record per line with its shape, tags and
/// row-major weights.
void save_trace(const std::filesystem::path& path, const AttentionTrace& trace);
[[nodiscard]] AttentionTrace load_trace(const std::filesystem::path& path);

}  // namespace gtr
