#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trajkit/errors.hpp"

// Just enough CSV handling for the drone-recording track files: one header
// line, comma-separated numeric/text fields, no quoting or escapes.

namespace trajkit::csv {

struct Table {
    std::vector<std::string> columns;
    std::unordered_map<std::string, std::size_t> index;
    // rows[i] holds the raw fields of data line i; line_no[i] is its
    // 1-based line number in the source for error reporting.
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_no;

    bool has_column(std::string_view name) const { return index.count(std::string(name)) > 0; }

    std::size_t column(std::string_view name) const {
        auto it = index.find(std::string(name));
        if (it == index.end()) {
            throw DataError("unknown column '" + std::string(name) + "'");
        }
        return it->second;
    }
};

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view field = (comma == std::string_view::npos)
                                     ? line.substr(start)
                                     : line.substr(start, comma - start);
        // trim spaces and stray CR
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        out.emplace_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace detail

// Parses a whole CSV document. Rows whose field count differs from the
// header are kept verbatim so callers can report them as malformed.
inline Table parse(std::string_view text) {
    Table t;
    std::size_t pos = 0;
    std::size_t line = 0;
    bool saw_header = false;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view raw = (nl == std::string_view::npos) ? text.substr(pos) : text.substr(pos, nl - pos);
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        if (!raw.empty()) {
            if (!saw_header) {
                t.columns = detail::split_fields(raw);
                for (std::size_t i = 0; i < t.columns.size(); ++i) t.index.emplace(t.columns[i], i);
                saw_header = true;
            } else {
                t.rows.push_back(detail::split_fields(raw));
                t.line_no.push_back(line);
            }
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!saw_header) throw DataError("empty csv: no header line");
    return t;
}

inline std::optional<double> to_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> to_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::int64_t v = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec == std::errc{} && ptr == end) return v;
    // some exporters write integer ids as "12.0"
    auto d = to_double(s);
    if (!d) return std::nullopt;
    double rounded = std::round(*d);
    if (rounded != *d) return std::nullopt;
    return static_cast<std::int64_t>(rounded);
}

} // namespace trajkit::csv
