#include "sbtom/perspective_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "sbtom/belief_io.hpp"

namespace sbtom::perspective::io {
namespace {

using sbtom::io::TokenReader;

std::vector<double> read_values(TokenReader& in, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = in.next_double();
  return out;
}

std::size_t parse_index(TokenReader& in, const std::string& tok, std::size_t limit, const ActionSpace* actions) {
  if (actions) {
    if (auto idx = actions->index_of(tok)) return *idx;
  }
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used == tok.size() && v < limit) return v;
  } catch (const std::logic_error&) {
  }
  in.fail("bad index '" + tok + "'");
}

}  // namespace

PerspectiveRequest read_request(std::istream& is, const std::string& base_dir) {
  TokenReader in(is);
  in.expect("perspective-request");
  in.expect("v1");
  in.expect("kernel");
  std::filesystem::path kpath(in.next());
  if (kpath.is_relative()) kpath = std::filesystem::path(base_dir) / kpath;
  Kernel kernel = sbtom::io::load_kernel(kpath.string());
  const std::size_t nx = kernel.num_states();

  in.expect("ego");
  Belief ego(kernel.space(), read_values(in, nx));
  in.expect("observed");
  std::optional<std::size_t> observed;
  if (const std::string tok = in.next(); tok != "none") observed = parse_index(in, tok, nx, nullptr);

  std::optional<Belief> anchor;
  if (in.peek() == "anchor") {
    in.next();
    anchor = Belief(kernel.space(), read_values(in, nx));
  }
  in.expect("actions");
  const std::size_t n = in.next_size();
  std::vector<std::size_t> actions;
  for (std::size_t t = 0; t < n; ++t) {
    actions.push_back(parse_index(in, in.next(), kernel.num_actions(), &kernel.actions()));
  }

  PerspectiveRequest r{std::move(ego), observed, std::move(anchor), std::move(actions), std::move(kernel)};
  while (!in.at_end()) {
    const std::string key = in.next();
    if (key == "smoothing") {
      r.endpoint_smoothing = in.next_double();
    } else if (key == "output_index") {
      r.output_index = in.next_size();
    } else if (key == "output") {
      const std::string mode = in.next();
      if (mode == "marginal") {
        r.output = OutputMode::Marginal;
      } else if (mode == "average") {
        r.output = OutputMode::Average;
      } else {
        in.fail("expected marginal or average, got '" + mode + "'");
      }
    } else if (key == "tolerance") {
      r.tolerance = in.next_double();
    } else if (key == "max_iters") {
      r.max_iters = in.next_size();
    } else {
      in.fail("unknown key '" + key + "'");
    }
  }
  return r;
}

PerspectiveRequest load_request(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open request file '" + path + "'");
  const auto dir = std::filesystem::path(path).parent_path();
  try {
    return read_request(f, dir.empty() ? "." : dir.string());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_result(std::ostream& os, const ShiftResult& result) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", result.smoothing_used);
  os << "fell_back " << (result.fell_back ? "true" : "false") << '\n';
  os << "smoothing " << buf << '\n';
  os << "attempts " << result.attempts << '\n';
  os << "iterations " << result.iterations << '\n';
  sbtom::io::write_belief(os, result.belief);
}

}  // namespace sbtom::perspective::io
