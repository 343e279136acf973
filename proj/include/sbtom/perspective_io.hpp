#pragma once

// Request file:
//
//   perspective-request v1
//   kernel <path>                   relative paths resolve against the request file
//   ego <p_0> ... <p_{|X|-1}>
//   observed <state> | none
//   anchor <q_0> ... <q_{|X|-1}>    optional
//   actions <n> <a_0> ... <a_{n-1}> indices or action labels
//   smoothing <real>                optional
//   output_index <k>                optional
//   output marginal | average       optional
//   tolerance <real>                optional
//   max_iters <int>                 optional

#include <iosfwd>
#include <string>

#include "sbtom/perspective.hpp"

namespace sbtom::perspective::io {

PerspectiveRequest read_request(std::istream& is, const std::string& base_dir = ".");
PerspectiveRequest load_request(const std::string& path);

/// Summary lines: fell_back, smoothing, attempts, iterations, then a belief block.
void write_result(std::ostream& os, const ShiftResult& result);

}  // namespace sbtom::perspective::io
