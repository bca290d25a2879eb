#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cbnet::csv {

/// Split one line on commas. Fields never contain quotes or commas in any
/// of this project's formats, so no quoting rules apply.
std::vector<std::string> split(std::string_view line);

/// Shortest decimal text that parses back to exactly `v` ("nan"/"inf" allowed).
std::string format(double v);

/// Fixed-point text with `decimals` digits after the point.
std::string format_fixed(double v, int decimals);

/// A whole CSV document: leading `#` comment lines, one header, data rows.
struct Document {
  std::string source;                    // path or label used in error messages
  std::vector<std::string> comments;     // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers; // 1-based file line of each row

  /// Index of `name` in the header, or ParseError.
  std::size_t column(std::string_view name) const;

  /// Throws ParseError unless the header equals `expected` exactly.
  void require_header(const std::vector<std::string> &expected) const;

  /// Throws ParseError unless the first comment equals `magic`.
  void require_magic(std::string_view magic) const;

  /// Look up `key=value` in any comment line of the form `key=value[,key=value]`.
  std::optional<std::string> meta(std::string_view key) const;

  double number(std::size_t row, std::size_t col) const;
  std::optional<double> optional_number(std::size_t row, std::size_t col) const;
  long long integer(std::size_t row, std::size_t col) const;
  const std::string &text(std::size_t row, std::size_t col) const { return rows[row][col]; }

  [[noreturn]] void fail(std::size_t row, std::size_t col, const std::string &what) const;
};

Document read(const std::filesystem::path &path);
Document parse(std::string_view text, std::string source);

/// Write `text` to `path` in binary mode (LF line endings preserved),
/// creating parent directories as needed.
void write_file(const std::filesystem::path &path, std::string_view text);
std::string read_file(const std::filesystem::path &path);

std::string join(const std::vector<std::string> &fields);

} // namespace cbnet::csv
