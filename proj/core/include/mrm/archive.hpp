#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mrm/params.hpp"

namespace mrm::ad {

inline constexpr int kArchiveVersion = 1;

/// Named tensors plus free-form metadata. On disk:
///
///     mrm-archive <version>
///     meta <key> <value>            (zero or more)
///     param <name> <rank> <dims...>
///     <row-major values as hex floats, one line>
///     end
///
/// Hex floats make the round trip bit-exact.
struct Archive {
    std::vector<std::pair<std::string, std::string>> metadata;
    ParameterSet params;

    const std::string* meta(const std::string& key) const;
};

void write_archive(std::ostream& out, const Archive& archive);
Archive read_archive(std::istream& in);
void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace mrm::ad
