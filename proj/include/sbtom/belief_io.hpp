#pragma once

// Plain-text formats.
//
//   belief <n>
//   p_0 p_1 ... p_{n-1}
//
//   matrix <rows> <cols>
//   <rows lines of cols whitespace-separated values>
//
//   kernel <states> <actions>
//   factors <k> <c_1> ... <c_k>        (k = 0 for an unfactored space)
//   action <label>
//   <|X| rows of |X| values>           (repeated per action)
//
// Values are written with 17 significant digits, so a write/read cycle
// reproduces every double exactly. Lines starting with '#' are ignored.

#include <iosfwd>
#include <string>

#include "sbtom/belief.hpp"

namespace sbtom::io {

/// Whitespace tokenizer that skips '#' comments and tracks line numbers for errors.
class TokenReader {
 public:
  explicit TokenReader(std::istream& is) : is_(is) {}

  bool at_end();
  std::string next();
  std::string peek();
  void expect(const std::string& keyword);
  double next_double();
  std::size_t next_size();
  std::size_t line() const noexcept { return line_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  bool fill();

  std::istream& is_;
  std::string pending_;
  bool has_pending_ = false;
  std::size_t line_ = 0;
  std::string buffer_;
  std::size_t pos_ = 0;
};

void write_belief(std::ostream& os, const Belief& b);
Belief read_belief(std::istream& is, const StateSpace& space);
Belief read_belief(std::istream& is);
Belief read_belief(TokenReader& in);
Belief read_belief(TokenReader& in, const StateSpace& space);

void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is);
Matrix read_matrix(TokenReader& in);

void write_kernel(std::ostream& os, const Kernel& k);
Kernel read_kernel(std::istream& is);
Kernel read_kernel(TokenReader& in);
Kernel load_kernel(const std::string& path);
void save_kernel(const std::string& path, const Kernel& k);


}  // namespace sbtom::io
