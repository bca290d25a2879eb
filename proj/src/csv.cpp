#include "cbnet/csv.hpp"

#include "cbnet/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cbnet::csv {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::size_t Document::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError(source + ": missing column '" + std::string(name) + "'");
}

void Document::require_header(const std::vector<std::string> &expected) const {
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size())
      throw ParseError(source + ": missing column '" + expected[i] + "' at position " + std::to_string(i + 1));
    if (header[i] != expected[i])
      throw ParseError(source + ": expected column '" + expected[i] + "' at position " + std::to_string(i + 1) +
                       ", found '" + header[i] + "'");
  }
  if (header.size() > expected.size())
    throw ParseError(source + ": unexpected extra column '" + header[expected.size()] + "'");
}

void Document::require_magic(std::string_view magic) const {
  if (comments.empty() || comments.front() != magic)
    throw ParseError(source + ": expected first line '# " + std::string(magic) + "' (wrong file type or version)");
}

std::optional<std::string> Document::meta(std::string_view key) const {
  for (const auto &c : comments) {
    for (const auto &kv : split(c)) {
      const auto eq = kv.find('=');
      if (eq != std::string::npos && std::string_view(kv).substr(0, eq) == key) return kv.substr(eq + 1);
    }
  }
  return std::nullopt;
}

void Document::fail(std::size_t row, std::size_t col, const std::string &what) const {
  const std::string name = col < header.size() ? header[col] : std::to_string(col + 1);
  throw ParseError(source, line_numbers.at(row), name, what);
}

double Document::number(std::size_t row, std::size_t col) const {
  const std::string &s = rows[row][col];
  if (s.empty()) fail(row, col, "empty field where a number is required");
  double v = 0;
  const char *first = s.data();
  const char *last = s.data() + s.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    // from_chars rejects a leading '+', and nan/inf spelled differently; fall back.
    char *end = nullptr;
    v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) fail(row, col, "not a number: '" + s + "'");
  }
  return v;
}

std::optional<double> Document::optional_number(std::size_t row, std::size_t col) const {
  if (rows[row][col].empty()) return std::nullopt;
  return number(row, col);
}

long long Document::integer(std::size_t row, std::size_t col) const {
  const std::string &s = rows[row][col];
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(row, col, "not an integer: '" + s + "'");
  return v;
}

Document parse(std::string_view text, std::string source) {
  Document doc;
  doc.source = std::move(source);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (have_header) throw ParseError(doc.source + ": comment line " + std::to_string(line_no) + " after header");
      line.remove_prefix(1);
      if (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      doc.comments.emplace_back(line);
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      doc.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != doc.header.size())
      throw ParseError(doc.source, line_no, fields.size() < doc.header.size() ? doc.header[fields.size()] : "<extra>",
                       "expected " + std::to_string(doc.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    doc.rows.push_back(std::move(fields));
    doc.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError(doc.source + ": no header line");
  return doc;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Document read(const std::filesystem::path &path) { return parse(read_file(path), path.string()); }

void write_file(const std::filesystem::path &path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::string join(const std::vector<std::string> &fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

} // namespace cbnet::csv
