#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace shield {

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string read_text(const std::filesystem::path& path);
// Writes via a temporary file and rename, so readers never see a partial file.
void write_text(const std::filesystem::path& path, const std::string& content);

using CsvRow = std::vector<std::string>;

// Minimal CSV: no quoting; fields must not contain commas or newlines.
std::string to_csv(const CsvRow& header, const std::vector<CsvRow>& rows);
std::vector<CsvRow> parse_csv(const std::string& text);

}  // namespace shield
