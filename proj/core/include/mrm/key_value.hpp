#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace mrm {

/// Flat `key = value` text, one pair per line. Blank lines and lines starting
/// with '#' are ignored. Keys are kept sorted so writes are reproducible.
class KeyValues {
public:
    static KeyValues parse(std::istream& in, const std::string& source = "<stream>");
    static KeyValues load(const std::filesystem::path& path);
    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace mrm
