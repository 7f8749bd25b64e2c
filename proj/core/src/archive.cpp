#include "mrm/archive.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mrm::ad {

namespace {

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

[[noreturn]] void bad(const std::string& what) { throw std::runtime_error("archive: " + what); }

}  // namespace

const std::string* Archive::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
        if (k == key) return &v;
    return nullptr;
}

void write_archive(std::ostream& out, const Archive& archive) {
    out << "mrm-archive " << kArchiveVersion << '\n';
    for (const auto& [k, v] : archive.metadata) {
        if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
            bad("metadata key/value contains whitespace or newline: " + k);
        out << "meta " << k << ' ' << v << '\n';
    }
    const ParameterSet& p = archive.params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        out << "param " << p.name(i) << ' ' << p[i].rank();
        for (std::size_t d : p[i].shape()) out << ' ' << d;
        out << '\n';
        bool first = true;
        for (double x : p[i].data()) {
            if (!first) out << ' ';
            out << hex(x);
            first = false;
        }
        out << '\n';
    }
    out << "end\n";
}

Archive read_archive(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) bad("empty input");
    {
        std::istringstream header(line);
        std::string magic;
        int version = 0;
        if (!(header >> magic >> version) || magic != "mrm-archive") bad("missing 'mrm-archive' header");
        if (version != kArchiveVersion) bad("unsupported format version " + std::to_string(version));
    }
    Archive archive;
    while (std::getline(in, line)) {
        if (line == "end") return archive;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls >> std::ws, value);
            archive.metadata.emplace_back(key, value);
        } else if (kind == "param") {
            std::string name;
            std::size_t rank = 0;
            if (!(ls >> name >> rank)) bad("malformed param line: " + line);
            std::vector<std::size_t> shape(rank);
            for (auto& d : shape)
                if (!(ls >> d)) bad("malformed shape for " + name);
            std::size_t count = 1;
            for (auto d : shape) count *= d;
            std::string values_line;
            if (!std::getline(in, values_line)) bad("missing values for " + name);
            std::vector<double> values;
            values.reserve(count);
            const char* cur = values_line.c_str();
            for (std::size_t i = 0; i < count; ++i) {
                char* end = nullptr;
                const double v = std::strtod(cur, &end);
                if (end == cur) bad("expected " + std::to_string(count) + " values for " + name);
                values.push_back(v);
                cur = end;
            }
            archive.params.add(name, Tensor(std::move(shape), std::move(values)));
        } else if (!kind.empty()) {
            bad("unknown record '" + kind + "'");
        }
    }
    bad("truncated (no 'end' record)");
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_archive(out, archive);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_archive(in);
}

}  // namespace mrm::ad
