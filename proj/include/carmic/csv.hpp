#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace carmic::csv {

using Row = std::vector<std::string>;

/// RFC 4180 subset: comma separated, double-quote escaping, LF or CRLF rows.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

/// Quotes a field only when it contains a comma, quote or newline.
std::string format_row(const Row& row);

/// Writes rows with LF line endings.
void write_file(const std::filesystem::path& path, const std::vector<Row>& rows);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace carmic::csv
