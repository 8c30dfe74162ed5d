#pragma once

// Instruments for the failure analysis: attention entropy per site/layer,
// validation-loss plateau detection and attention range.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "gtr/trace.hpp"

namespace gtr {

/// Shannon entropy of one distribution, in bits. Zero entries contribute 0.
template <typename Derived>
[[nodiscard]] double entropy_bits(const Eigen::DenseBase<Derived>& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double v = static_cast<double>(p.derived().coeff(i));
        if (v > 0.0) h -= v * std::log2(v);
    }
    return h;
}

struct EntropyKey {
    AttentionSite site;
    AttentionBranch branch;
    int layer;

    auto operator<=>(const EntropyKey&) const = default;
};

[[nodiscard]] std::string to_string(const EntropyKey& k);

/// Mean entropy in bits over non-pad query rows and heads (and every record
/// in the trace), kept per site, branch and layer, with per-site means.
struct EntropyEntry {
    std::map<EntropyKey, double> by_layer;
    std::map<AttentionSite, double> by_site;
    double overall = 0.0;
};

[[nodiscard]] EntropyEntry attention_entropy(const AttentionTrace& trace);

/// Same averaging for sum_j p_ij |i - j| over self-attention records.
[[nodiscard]] std::map<EntropyKey, double> mean_attention_distance(const AttentionTrace& trace);

struct EntropyPoint {
    int step;
    EntropyEntry entry;
};
using EntropySeries = std::vector<EntropyPoint>;

struct Plateau {
    int start_step;
    int end_step;

    bool operator==(const Plateau&) const = default;
};

/// A window of `window` checkpoints is stalled when the best-so-far loss
/// improves by less than slope_tol across it. Overlapping stalled windows
/// are merged and returned as maximal (start, end) step ranges.
[[nodiscard]] std::vector<Plateau> detect_plateau(const std::vector<std::pair<int, double>>& losses, int window,
                                                  double slope_tol);

/// True when every value stays within `tol` of the running minimum.
[[nodiscard]] bool monotone_within(const std::vector<double>& series, double tol);

}  // namespace gtr
