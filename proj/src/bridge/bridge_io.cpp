#include "sbtom/bridge_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "sbtom/belief_io.hpp"

namespace sbtom::bridge::io {
namespace {

using sbtom::io::TokenReader;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_row(std::ostream& os, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt(v[i]);
  os << '\n';
}

std::vector<double> read_values(TokenReader& in, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = in.next_double();
  return out;
}

Matrix read_square(TokenReader& in, std::size_t n) {
  return Matrix(n, n, read_values(in, n * n));
}

std::size_t parse_action(TokenReader& in, const std::string& tok, const ActionSpace& actions) {
  if (auto idx = actions.index_of(tok)) return *idx;
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used == tok.size() && v < actions.size()) return v;
  } catch (const std::logic_error&) {
  }
  in.fail("unknown action '" + tok + "'");
}

}  // namespace

BridgeProblem read_problem(std::istream& is, const std::string& base_dir) {
  TokenReader in(is);
  in.expect("bridge-problem");
  in.expect("v1");
  in.expect("kernel");
  std::filesystem::path kpath(in.next());
  if (kpath.is_relative()) kpath = std::filesystem::path(base_dir) / kpath;
  Kernel kernel = sbtom::io::load_kernel(kpath.string());

  in.expect("actions");
  const std::size_t n = in.next_size();
  std::vector<std::size_t> actions;
  for (std::size_t t = 0; t < n; ++t) actions.push_back(parse_action(in, in.next(), kernel.actions()));

  in.expect("start");
  Belief start(kernel.space(), read_values(in, kernel.num_states()));
  in.expect("end");
  Belief end(kernel.space(), read_values(in, kernel.num_states()));

  BridgeProblem p{kernel, std::move(actions), std::move(start), std::move(end)};
  while (!in.at_end()) {
    const std::string key = in.next();
    if (key == "tolerance") {
      p.tolerance = in.next_double();
    } else if (key == "max_iters") {
      p.max_iters = in.next_size();
    } else {
      in.fail("unknown key '" + key + "'");
    }
  }
  return p;
}

BridgeProblem load_problem(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open problem file '" + path + "'");
  const auto dir = std::filesystem::path(path).parent_path();
  try {
    return read_problem(f, dir.empty() ? "." : dir.string());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_problem(std::ostream& os, const BridgeProblem& p, const std::string& kernel_path) {
  os << "bridge-problem v1\n";
  os << "kernel " << kernel_path << '\n';
  os << "actions " << p.actions.size();
  for (std::size_t a : p.actions) os << ' ' << a;
  os << "\nstart ";
  write_row(os, p.start.probs());
  os << "end ";
  write_row(os, p.end.probs());
  os << "tolerance " << fmt(p.tolerance) << '\n';
  os << "max_iters " << p.max_iters << '\n';
}

void write_solution(std::ostream& os, const BridgeSolution& s, double kl) {
  const std::size_t n = s.horizon();
  const std::size_t nx = s.tilted.space().size();
  os << "bridge-solution v1\n";
  os << "horizon " << n << " states " << nx << '\n';
  os << "iterations_used " << s.iterations_used << '\n';
  os << "endpoint_error " << fmt(s.endpoint_error) << '\n';
  os << "kl_path " << fmt(kl) << '\n';
  for (std::size_t t = 0; t <= n; ++t) {
    os << "log_phi " << t << ' ';
    write_row(os, s.potentials.log_phi[t]);
  }
  for (std::size_t t = 0; t <= n; ++t) {
    os << "log_psi " << t << ' ';
    write_row(os, s.potentials.log_psi[t]);
  }
  for (std::size_t t = 0; t < n; ++t) {
    os << "reference " << t << '\n';
    for (std::size_t r = 0; r < nx; ++r) write_row(os, s.reference_steps.step(t).row(r));
  }
  for (std::size_t t = 0; t < n; ++t) {
    os << "tilted " << t << '\n';
    for (std::size_t r = 0; r < nx; ++r) write_row(os, s.tilted.step(t).row(r));
  }
  for (std::size_t t = 0; t <= n; ++t) {
    os << "marginal " << t << ' ';
    write_row(os, s.marginals[t].probs());
  }
}

SolutionFile read_solution(std::istream& is) {
  TokenReader in(is);
  in.expect("bridge-solution");
  in.expect("v1");
  in.expect("horizon");
  const std::size_t n = in.next_size();
  in.expect("states");
  const std::size_t nx = in.next_size();
  const StateSpace space(nx);

  SolutionFile out;
  BridgeSolution& s = out.solution;
  in.expect("iterations_used");
  s.iterations_used = in.next_size();
  in.expect("endpoint_error");
  s.endpoint_error = in.next_double();
  in.expect("kl_path");
  out.kl_path = in.next_double();

  auto indexed = [&](const char* key, std::size_t t) {
    in.expect(key);
    if (in.next_size() != t) in.fail(std::string("out-of-order '") + key + "' block");
  };
  for (std::size_t t = 0; t <= n; ++t) {
    indexed("log_phi", t);
    s.potentials.log_phi.push_back(read_values(in, nx));
  }
  for (std::size_t t = 0; t <= n; ++t) {
    indexed("log_psi", t);
    s.potentials.log_psi.push_back(read_values(in, nx));
  }
  std::vector<Matrix> ref;
  std::vector<Matrix> bar;
  for (std::size_t t = 0; t < n; ++t) {
    indexed("reference", t);
    ref.push_back(read_square(in, nx));
  }
  for (std::size_t t = 0; t < n; ++t) {
    indexed("tilted", t);
    bar.push_back(read_square(in, nx));
  }
  for (std::size_t t = 0; t <= n; ++t) {
    indexed("marginal", t);
    s.marginals.emplace_back(space, read_values(in, nx));
  }
  s.reference_steps = TimeVaryingKernel(space, std::move(ref));
  s.tilted = TimeVaryingKernel(space, std::move(bar));
  return out;
}

}  // namespace sbtom::bridge::io
