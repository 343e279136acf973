#pragma once

// Problem file:
//
//   bridge-problem v1
//   kernel <path>                 relative paths resolve against the problem file
//   actions <n> <a_0> ... <a_{n-1}>   indices or action labels
//   start <p_0> ... <p_{|X|-1}>
//   end <q_0> ... <q_{|X|-1}>
//   tolerance <real>              optional, default 1e-9
//   max_iters <int>               optional, default 10000
//
// Solution file:
//
//   bridge-solution v1
//   horizon <n> states <|X|>
//   iterations_used <k>
//   endpoint_error <real>
//   kl_path <real>
//   log_phi <t> <values>          t = 0..n, "-inf" marks a masked potential
//   log_psi <t> <values>
//   reference <t>                 followed by |X| rows
//   tilted <t>                    followed by |X| rows
//   marginal <t> <values>

#include <iosfwd>
#include <string>

#include "sbtom/bridge.hpp"

namespace sbtom::bridge::io {

BridgeProblem read_problem(std::istream& is, const std::string& base_dir = ".");
BridgeProblem load_problem(const std::string& path);

void write_problem(std::ostream& os, const BridgeProblem& problem, const std::string& kernel_path);

void write_solution(std::ostream& os, const BridgeSolution& solution, double kl);

struct SolutionFile {
  BridgeSolution solution;
  double kl_path = 0.0;
};
SolutionFile read_solution(std::istream& is);

}  // namespace sbtom::bridge::io
