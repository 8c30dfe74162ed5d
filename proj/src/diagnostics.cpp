#include "gtr/diagnostics.hpp"

#include <algorithm>
#include <cstdlib>

#include "gtr/errors.hpp"

namespace gtr {

std::string to_string(const EntropyKey& k) {
    return std::string(to_string(k.site)) + "/" + std::string(to_string(k.branch)) + "/" + std::to_string(k.layer);
}

namespace {

struct Mean {
    double sum = 0.0;
    long count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    [[nodiscard]] double value() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

template <typename RowFn>
std::map<EntropyKey, Mean> per_row_means(const AttentionTrace& trace, RowFn fn, bool self_only) {
    std::map<EntropyKey, Mean> acc;
    for (const auto& r : trace.records) {
        if (self_only && r.site == AttentionSite::cross) continue;
        if (static_cast<Eigen::Index>(r.query_tags.size()) != r.weights.rows()) {
            throw ShapeError("trace record query tags do not match its weights");
        }
        Mean& m = acc[EntropyKey{r.site, r.branch, r.layer}];
        for (Eigen::Index i = 0; i < r.weights.rows(); ++i) {
            if (r.query_tags[static_cast<std::size_t>(i)] == 0) continue;
            m.add(fn(r.weights, i));
        }
    }
    return acc;
}

}  // namespace

EntropyEntry attention_entropy(const AttentionTrace& trace) {
    const auto acc = per_row_means(
        trace, [](const Eigen::MatrixXd& w, Eigen::Index i) { return entropy_bits(w.row(i)); }, false);
    EntropyEntry e;
    std::map<AttentionSite, Mean> site;
    Mean all;
    for (const auto& [key, m] : acc) {
        if (m.count == 0) continue;
        e.by_layer[key] = m.value();
        site[key.site].sum += m.sum;
        site[key.site].count += m.count;
        all.sum += m.sum;
        all.count += m.count;
    }
    for (const auto& [s, m] : site) e.by_site[s] = m.value();
    e.overall = all.value();
    return e;
}

std::map<EntropyKey, double> mean_attention_distance(const AttentionTrace& trace) {
    const auto acc = per_row_means(
        trace,
        [](const Eigen::MatrixXd& w, Eigen::Index i) {
            double d = 0.0;
            for (Eigen::Index j = 0; j < w.cols(); ++j) d += w(i, j) * static_cast<double>(std::abs(i - j));
            return d;
        },
        true);
    std::map<EntropyKey, double> out;
    for (const auto& [key, m] : acc) {
        if (m.count) out[key] = m.value();
    }
    return out;
}

std::vector<Plateau> detect_plateau(const std::vector<std::pair<int, double>>& losses, int window, double slope_tol) {
    if (window < 1) throw ConfigError("plateau window must be at least 1");
    const auto n = static_cast<int>(losses.size());
    std::vector<double> best(losses.size());
    for (int i = 0; i < n; ++i) best[i] = i == 0 ? losses[0].second : std::min(best[i - 1], losses[i].second);

    std::vector<Plateau> out;
    int open_start = -1, open_end = -1;
    for (int i = window; i < n; ++i) {
        const bool stalled = best[i - window] - best[i] < slope_tol;
        if (!stalled) continue;
        if (open_start >= 0 && i - window <= open_end) {
            open_end = i;
        } else {
            if (open_start >= 0) out.push_back({losses[open_start].first, losses[open_end].first});
            open_start = i - window;
            open_end = i;
        }
    }
    if (open_start >= 0) out.push_back({losses[open_start].first, losses[open_end].first});
    return out;
}

bool monotone_within(const std::vector<double>& series, double tol) {
    double running = std::numeric_limits<double>::infinity();
    for (double v : series) {
        if (v > running + tol) return false;
        running = std::min(running, v);
    }
    return true;
}

}  // namespace gtr
