#include "mrm/partition.hpp"

#include <algorithm>
#include <string>

namespace mrm {

namespace {

void require_sorted(std::span<const double> times) {
    if (!std::is_sorted(times.begin(), times.end()))
        throw std::invalid_argument("partition: times must be sorted non-decreasing");
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

GreedyResult greedy_feasible(std::span<const double> times, double max_span, std::size_t max_groups,
                             std::size_t max_group_size) {
    GreedyResult result;
    const std::size_t n = times.size();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && end - start < max_group_size && times[end] - times[start] <= max_span) ++end;
        result.groups.push_back({start, end});
        start = end;
    }
    result.feasible = result.groups.size() <= max_groups;
    return result;
}

std::vector<double> candidate_spans(std::span<const double> times) {
    return windowed_candidate_spans(times, times.size());
}

std::vector<double> windowed_candidate_spans(std::span<const double> times, std::size_t window) {
    require_sorted(times);
    std::vector<double> spans;
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t j = i; j < times.size() && j - i < window; ++j) spans.push_back(times[j] - times[i]);
    return sorted_unique(std::move(spans));
}

Partition optimal_partition(std::span<const double> times, std::size_t max_groups, std::size_t max_group_size) {
    if (max_groups == 0 || max_group_size == 0)
        throw std::invalid_argument("optimal_partition: M and L_G must be >= 1");
    require_sorted(times);
    const std::size_t n = times.size();
    if (n > max_groups * max_group_size)
        throw InfeasiblePartition("optimal_partition: " + std::to_string(n) + " events exceed M x L_G = " +
                                  std::to_string(max_groups) + " x " + std::to_string(max_group_size));
    Partition p;
    if (n == 0) return p;

    const auto candidates = windowed_candidate_spans(times, max_group_size);
    // The largest candidate is feasible because only the size limit binds there.
    std::size_t lo = 0, hi = candidates.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (greedy_feasible(times, candidates[mid], max_groups, max_group_size).feasible)
            hi = mid;
        else
            lo = mid + 1;
    }
    p.groups = greedy_feasible(times, candidates[lo], max_groups, max_group_size).groups;
    p.spans.reserve(p.groups.size());
    for (const IndexRange& g : p.groups) {
        p.spans.push_back(times[g.end - 1] - times[g.begin]);
        p.minimax_span = std::max(p.minimax_span, p.spans.back());
    }
    return p;
}

}  // namespace mrm
