#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mrm {

/// Half-open index range [begin, end) over a time-sorted event list.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Contiguous grouping of a sorted event list.
struct Partition {
    std::vector<IndexRange> groups;
    /// t_last - t_first of each group, in hours.
    std::vector<double> spans;
    double minimax_span = 0.0;
};

/// Raised when L > M * L_G, i.e. no partition satisfies both limits.
class InfeasiblePartition : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GreedyResult {
    bool feasible = false;
    std::vector<IndexRange> groups;
};

/// Left-to-right scan that closes the current group as soon as the next event
/// would push its span above `max_span` or its size above `max_group_size`.
/// For a fixed threshold this yields the fewest groups; feasible iff that count
/// is at most `max_groups`.
GreedyResult greedy_feasible(std::span<const double> times, double max_span, std::size_t max_groups,
                             std::size_t max_group_size);

/// Every difference t_j - t_i (j >= i), sorted and deduplicated.
std::vector<double> candidate_spans(std::span<const double> times);

/// Differences t_j - t_i with j - i < window, sorted and deduplicated. With
/// window = L_G this still contains the optimum, since a group never holds
/// more than L_G events.
std::vector<double> windowed_candidate_spans(std::span<const double> times, std::size_t window);

/// Partition into at most `max_groups` contiguous groups of at most
/// `max_group_size` events that minimises the largest group span. Binary
/// search over the candidate spans with greedy_feasible as the oracle; the
/// result is the greedy grouping at the optimal threshold.
///
/// Throws InfeasiblePartition when times.size() > max_groups * max_group_size,
/// std::invalid_argument for unsorted times or zero limits.
Partition optimal_partition(std::span<const double> times, std::size_t max_groups, std::size_t max_group_size);

}  // namespace mrm
