#include "cbnet/textio.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"

#include <charconv>
#include <cmath>

namespace cbnet {

void TextWriter::sep() {
  if (!line_start_) os_ << ' ';
  line_start_ = false;
}

TextWriter &TextWriter::tag(std::string_view t) { return word(t); }

TextWriter &TextWriter::num(double v) {
  sep();
  os_ << csv::format(v);
  return *this;
}

TextWriter &TextWriter::count(std::size_t n) {
  sep();
  os_ << n;
  return *this;
}

TextWriter &TextWriter::word(std::string_view w) {
  if (w.empty() || w.find_first_of(" \t\r\n") != std::string_view::npos)
    throw InvalidArgument("cannot serialize token '" + std::string(w) + "'");
  sep();
  os_ << w;
  return *this;
}

TextWriter &TextWriter::words(const std::vector<std::string> &ws) {
  count(ws.size());
  for (const auto &w : ws) word(w);
  return *this;
}

TextWriter &TextWriter::nums(const std::vector<double> &vs) {
  count(vs.size());
  for (double v : vs) num(v);
  return *this;
}

TextWriter &TextWriter::matrix(const Eigen::MatrixXd &m) {
  count(static_cast<std::size_t>(m.rows()));
  count(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) num(m(i, j));
  return newline();
}

TextWriter &TextWriter::newline() {
  os_ << '\n';
  line_start_ = true;
  return *this;
}

TextReader::TextReader(std::string_view text, std::string source) : is_(std::string(text)), source_(std::move(source)) {}

void TextReader::fail(const std::string &what) const {
  throw ParseError(source_ + ": token " + std::to_string(tokens_) + ": " + what);
}

std::string TextReader::word() {
  std::string w;
  if (!(is_ >> w)) fail("unexpected end of file");
  ++tokens_;
  return w;
}

void TextReader::expect(std::string_view t) {
  const auto w = word();
  if (w != t) fail("expected '" + std::string(t) + "', found '" + w + "'");
}

double TextReader::num() {
  const auto w = word();
  if (w == "nan") return std::nan("");
  if (w == "inf") return INFINITY;
  if (w == "-inf") return -INFINITY;
  double v = 0;
  const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || p != w.data() + w.size()) fail("expected a number, found '" + w + "'");
  return v;
}

std::size_t TextReader::count() {
  const auto w = word();
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || p != w.data() + w.size()) fail("expected a count, found '" + w + "'");
  return v;
}

std::vector<std::string> TextReader::words() {
  std::vector<std::string> out(count());
  for (auto &w : out) w = word();
  return out;
}

std::vector<double> TextReader::nums() {
  std::vector<double> out(count());
  for (auto &v : out) v = num();
  return out;
}

Eigen::MatrixXd TextReader::matrix() {
  const auto r = count(), c = count();
  if (r > (1u << 24) || c > (1u << 24)) fail("matrix too large");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = num();
  return m;
}

bool TextReader::done() {
  is_ >> std::ws;
  return is_.eof();
}

} // namespace cbnet
