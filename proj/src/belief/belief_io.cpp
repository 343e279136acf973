#include "sbtom/belief_io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace sbtom::io {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_values(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ' ';
    os << format_double(values[i]);
  }
  os << '\n';
}

Matrix read_matrix_body(TokenReader& in, std::size_t rows, std::size_t cols) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = in.next_double();
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

bool TokenReader::fill() {
  while (pos_ >= buffer_.size()) {
    if (!std::getline(is_, buffer_)) return false;
    ++line_;
    pos_ = 0;
    const auto hash = buffer_.find('#');
    if (hash != std::string::npos) buffer_.erase(hash);
  }
  return true;
}

std::string TokenReader::next() {
  if (has_pending_) {
    has_pending_ = false;
    return std::move(pending_);
  }
  while (true) {
    if (!fill()) fail("unexpected end of input");
    while (pos_ < buffer_.size() && std::isspace(static_cast<unsigned char>(buffer_[pos_]))) ++pos_;
    if (pos_ >= buffer_.size()) continue;
    const std::size_t start = pos_;
    while (pos_ < buffer_.size() && !std::isspace(static_cast<unsigned char>(buffer_[pos_]))) ++pos_;
    return buffer_.substr(start, pos_ - start);
  }
}

bool TokenReader::at_end() {
  if (has_pending_) return false;
  while (true) {
    if (!fill()) return true;
    while (pos_ < buffer_.size() && std::isspace(static_cast<unsigned char>(buffer_[pos_]))) ++pos_;
    if (pos_ < buffer_.size()) return false;
  }
}

std::string TokenReader::peek() {
  if (!has_pending_) {
    pending_ = next();
    has_pending_ = true;
  }
  return pending_;
}

void TokenReader::expect(const std::string& keyword) {
  const std::string tok = next();
  if (tok != keyword) fail("expected '" + keyword + "', found '" + tok + "'");
}

double TokenReader::next_double() {
  const std::string tok = next();
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) fail("malformed number '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    fail("malformed number '" + tok + "'");
  }
}

std::size_t TokenReader::next_size() {
  const std::string tok = next();
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("malformed integer '" + tok + "'");
  return v;
}

void TokenReader::fail(const std::string& what) const {
  throw ParseError("line " + std::to_string(line_) + ": " + what);
}

void write_belief(std::ostream& os, const Belief& b) {
  os << "belief " << b.size() << '\n';
  write_values(os, b.probs());
}

Belief read_belief(TokenReader& in) {
  in.expect("belief");
  const std::size_t n = in.next_size();
  std::vector<double> p(n);
  for (double& v : p) v = in.next_double();
  return Belief(StateSpace(n), std::move(p));
}

Belief read_belief(TokenReader& in, const StateSpace& space) {
  Belief b = read_belief(in);
  if (b.size() != space.size()) in.fail("belief size does not match " + space.describe());
  return Belief(space, std::vector<double>(b.probs().begin(), b.probs().end()));
}

Belief read_belief(std::istream& is, const StateSpace& space) {
  TokenReader in(is);
  return read_belief(in, space);
}

Belief read_belief(std::istream& is) {
  TokenReader in(is);
  return read_belief(in);
}

void write_matrix(std::ostream& os, const Matrix& m) {
  os << "matrix " << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) write_values(os, m.row(r));
}

Matrix read_matrix(TokenReader& in) {
  in.expect("matrix");
  const std::size_t rows = in.next_size();
  const std::size_t cols = in.next_size();
  return read_matrix_body(in, rows, cols);
}

Matrix read_matrix(std::istream& is) {
  TokenReader in(is);
  return read_matrix(in);
}

void write_kernel(std::ostream& os, const Kernel& k) {
  os << "kernel " << k.num_states() << ' ' << k.num_actions() << '\n';
  os << "factors " << k.space().factor_sizes().size();
  for (std::size_t c : k.space().factor_sizes()) os << ' ' << c;
  os << '\n';
  for (std::size_t a = 0; a < k.num_actions(); ++a) {
    os << "action " << k.actions().label(a) << '\n';
    const Matrix& m = k.matrix(a);
    for (std::size_t r = 0; r < m.rows(); ++r) write_values(os, m.row(r));
  }
}

Kernel read_kernel(std::istream& is) {
  TokenReader in(is);
  return read_kernel(in);
}

Kernel read_kernel(TokenReader& in) {
  in.expect("kernel");
  const std::size_t n = in.next_size();
  const std::size_t na = in.next_size();
  StateSpace space(n);
  if (in.peek() == "factors") {
    in.next();
    const std::size_t k = in.next_size();
    if (k > 0) {
      std::vector<std::size_t> cards(k);
      for (auto& c : cards) c = in.next_size();
      space = StateSpace::factored(std::move(cards));
      if (space.size() != n) in.fail("factor cardinalities do not multiply to " + std::to_string(n));
    }
  }
  std::vector<std::string> labels;
  std::vector<Matrix> table;
  for (std::size_t a = 0; a < na; ++a) {
    in.expect("action");
    labels.push_back(in.next());
    table.push_back(read_matrix_body(in, n, n));
  }
  return Kernel(space, ActionSpace(std::move(labels)), std::move(table));
}

Kernel load_kernel(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open kernel file '" + path + "'");
  try {
    return read_kernel(f);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void save_kernel(const std::string& path, const Kernel& k) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write kernel file '" + path + "'");
  write_kernel(f, k);
}

}  // namespace sbtom::io
