#pragma once

#include <cstddef>
#include <span>

namespace mrm {

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// O(n log n). Throws std::invalid_argument unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean over positives of the precision at each positive's rank, ranking by
/// descending score with ties kept in original index order. Throws
/// std::invalid_argument when there is no positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);

}  // namespace mrm
