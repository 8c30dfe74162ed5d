#include "gtr/trace.hpp"

#include <fstream>
#include <json.hpp>

#include "gtr/errors.hpp"

namespace gtr {

std::string_view to_string(AttentionSite site) {
    switch (site) {
        case AttentionSite::encoder_self: return "enc-self";
        case AttentionSite::decoder_self: return "dec-self";
        case AttentionSite::cross: return "cross";
    }
    return "?";
}

std::string_view to_string(AttentionBranch branch) {
    return branch == AttentionBranch::local ? "local" : "global";
}

AttentionSite parse_site(std::string_view s) {
    if (s == "enc-self") return AttentionSite::encoder_self;
    if (s == "dec-self") return AttentionSite::decoder_self;
    if (s == "cross") return AttentionSite::cross;
    throw ConfigError("unknown attention site: " + std::string(s));
}

AttentionBranch parse_branch(std::string_view s) {
    if (s == "local") return AttentionBranch::local;
    if (s == "global") return AttentionBranch::global;
    throw ConfigError("unknown attention branch: " + std::string(s));
}

void save_trace(const std::filesystem::path& path, const AttentionTrace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path.string());
    for (const auto& r : trace.records) {
        nlohmann::json j;
        j["site"] = to_string(r.site);
        j["branch"] = to_string(r.branch);
        j["layer"] = r.layer;
        j["head"] = r.head;
        j["rows"] = r.weights.rows();
        j["cols"] = r.weights.cols();
        j["query_tags"] = r.query_tags;
        j["key_tags"] = r.key_tags;
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(r.weights.size()));
        for (Eigen::Index i = 0; i < r.weights.rows(); ++i)
            for (Eigen::Index k = 0; k < r.weights.cols(); ++k) flat.push_back(r.weights(i, k));
        j["weights"] = std::move(flat);
        out << j.dump() << '\n';
    }
}

AttentionTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace: " + path.string());
    AttentionTrace trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        AttentionRecord r;
        r.site = parse_site(j.at("site").get<std::string>());
        r.branch = parse_branch(j.at("branch").get<std::string>());
        r.layer = j.at("layer").get<int>();
        r.head = j.at("head").get<int>();
        r.query_tags = j.at("query_tags").get<GroupTagSeq>();
        r.key_tags = j.at("key_tags").get<GroupTagSeq>();
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto flat = j.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw ConfigError("trace record size mismatch");
        r.weights.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index k = 0; k < cols; ++k) r.weights(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
        trace.records.push_back(std::move(r));
    }
    return trace;
}

}  // namespace gtr
