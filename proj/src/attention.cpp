#include "gtr/attention.hpp"

#include <unordered_map>

namespace gtr {

std::int64_t unmasked_entry_count(std::span<const GroupTag> g_q, std::span<const GroupTag> g_k) {
    std::unordered_map<GroupTag, std::int64_t> key_counts;
    for (const GroupTag g : g_k) {
        if (g != 0) ++key_counts[g];
    }
    std::int64_t total = 0;
    for (const GroupTag g : g_q) {
        if (g == 0) continue;
        if (const auto it = key_counts.find(g); it != key_counts.end()) total += it->second;
    }
    return total;
}

}  // namespace gtr
