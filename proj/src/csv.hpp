#ifndef MASEM_SRC_CSV_HPP
#define MASEM_SRC_CSV_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "masem/errors.hpp"

// Minimal line-oriented CSV support. Fields are plain (no quoting); the file
// formats here never contain commas inside fields.
namespace masem::csv {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& s, const std::string& context) {
    const std::string t = strip(s);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError(context + ": cannot parse number '" + s + "'");
    return value;
}

inline long to_long(const std::string& s, const std::string& context) {
    const std::string t = strip(s);
    long value = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size())
        throw ParseError(context + ": cannot parse integer '" + s + "'");
    return value;
}

// Reads all non-empty lines; verifies the header matches exactly. A file
// with no content at all is a valid empty table.
inline std::vector<std::string> read_lines(const std::filesystem::path& path,
                                           const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        line = strip(line);
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != expected_header)
                throw ParseError(path.string() + ": expected header '" + expected_header +
                                 "', got '" + line + "'");
            saw_header = true;
            continue;
        }
        lines.push_back(line);
    }
    return lines;
}

} // namespace masem::csv

#endif
