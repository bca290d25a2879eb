#pragma once

// Whitespace-separated token streams for the versioned model files. Doubles
// are written in shortest round-trip form, so a reload is bit-exact.

#include <Eigen/Core>

#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cbnet {

class TextWriter {
public:
  TextWriter &tag(std::string_view t);
  TextWriter &num(double v);
  TextWriter &count(std::size_t n);
  TextWriter &word(std::string_view w); // must not contain whitespace
  TextWriter &words(const std::vector<std::string> &ws);
  TextWriter &nums(const std::vector<double> &vs);
  TextWriter &matrix(const Eigen::MatrixXd &m);
  TextWriter &newline();
  std::string str() const { return os_.str(); }

private:
  void sep();
  std::ostringstream os_;
  bool line_start_ = true;
};

class TextReader {
public:
  TextReader(std::string_view text, std::string source);
  /// Throws ParseError unless the next token is `t`.
  void expect(std::string_view t);
  std::string word();
  double num();
  std::size_t count();
  std::vector<std::string> words();
  std::vector<double> nums();
  Eigen::MatrixXd matrix();
  bool done();
  [[noreturn]] void fail(const std::string &what) const;

private:
  std::istringstream is_;
  std::string source_;
  std::size_t tokens_ = 0;
};

} // namespace cbnet
