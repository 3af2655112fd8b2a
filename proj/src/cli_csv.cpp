#include "mctp/cli.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mctp::cli {

int CsvTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

int CsvTable::require_column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0)
        fail(ErrorCode::DataError, "column '" + name + "' not found in the input header");
    return idx;
}

namespace {

// One record, honoring quotes; consumes the trailing newline. Returns false
// at end of input with no field started.
bool next_record(const std::string& text, std::size_t& pos, std::vector<std::string>& fields,
                 const std::string& origin, int record_no) {
    fields.clear();
    if (pos >= text.size()) return false;
    std::string field;
    bool quoted = false;
    for (;;) {
        if (pos >= text.size()) {
            if (quoted)
                fail(ErrorCode::DataError,
                     origin + ": unterminated quoted field in record " + std::to_string(record_no));
            fields.push_back(std::move(field));
            return true;
        }
        char ch = text[pos];
        if (quoted) {
            if (ch == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                field.push_back(ch);
                ++pos;
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (field.empty()) {
                    quoted = true;
                } else {
                    field.push_back(ch);
                }
                ++pos;
                break;
            case ',':
                fields.push_back(std::move(field));
                field.clear();
                ++pos;
                break;
            case '\r':
                ++pos;
                break;
            case '\n':
                ++pos;
                fields.push_back(std::move(field));
                return true;
            default:
                field.push_back(ch);
                ++pos;
                break;
        }
    }
}

} // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
    CsvTable table;
    std::size_t pos = 0;
    std::vector<std::string> fields;
    if (!next_record(text, pos, fields, origin, 0) || (fields.size() == 1 && fields[0].empty()))
        fail(ErrorCode::DataError, origin + ": missing header row");
    table.columns = fields;

    int record_no = 0;
    while (next_record(text, pos, fields, origin, ++record_no)) {
        if (fields.size() == 1 && fields[0].empty()) continue; // blank line
        if (fields.size() != table.columns.size())
            fail(ErrorCode::DataError,
                 origin + ": row " + std::to_string(record_no) + " has " +
                 std::to_string(fields.size()) + " fields, header has " +
                 std::to_string(table.columns.size()));
        table.rows.push_back(fields);
    }
    if (table.rows.empty())
        fail(ErrorCode::DataError, origin + ": no data rows");
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::DataError, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), path);
}

double parse_number(const std::string& field, int data_row, const std::string& column) {
    const char* first = field.data();
    const char* last = first + field.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\t')) --last;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last)
        fail(ErrorCode::DataError, "row " + std::to_string(data_row) + ", column '" + column +
                                   "': cannot parse '" + field + "' as a number");
    return value;
}

} // namespace mctp::cli
