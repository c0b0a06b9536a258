#pragma once

// RFC 4180 style CSV: comma separated, double-quote escaping, header row.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "planeval/error.hpp"

namespace planeval::csv {

using Row = std::vector<std::string>;

inline std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                field_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (field_started || !field.empty() || !row.empty()) {
                    row.push_back(std::move(field));
                    rows.push_back(std::move(row));
                }
                field.clear();
                row.clear();
                field_started = false;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) throw Error(ErrorKind::BadInput, "unterminated quoted CSV field");
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

inline std::string format_row(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(row[i]);
    }
    return out + "\n";
}

inline std::string format(const Row& header, const std::vector<Row>& rows) {
    std::string out = format_row(header);
    for (const auto& r : rows) out += format_row(r);
    return out;
}

/// Header-addressed view over parsed rows.
class Table {
public:
    explicit Table(std::string_view text) {
        auto rows = parse(text);
        if (rows.empty()) throw Error(ErrorKind::MissingColumn, "CSV has no header row");
        header_ = std::move(rows.front());
        rows.erase(rows.begin());
        rows_ = std::move(rows);
        for (std::size_t i = 0; i < header_.size(); ++i) index_.emplace(header_[i], i);
    }

    const Row& header() const noexcept { return header_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }
    bool has(const std::string& column) const { return index_.contains(column); }

    std::size_t column(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error(ErrorKind::MissingColumn, "missing column '" + name + "'");
        return it->second;
    }

    void require(const std::vector<std::string>& names) const {
        for (const auto& n : names) column(n);
    }

    const std::string& cell(std::size_t row, const std::string& name) const {
        const auto c = column(name);
        const auto& r = rows_.at(row);
        if (c >= r.size()) {
            throw Error(ErrorKind::MissingColumn, "row " + std::to_string(row + 2) + " lacks column '" + name + "'");
        }
        return r[c];
    }

private:
    Row header_;
    std::vector<Row> rows_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace planeval::csv
