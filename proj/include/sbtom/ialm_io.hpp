#pragma once

// Global model file:
//
//   ialm-model v1
//   actions <k> <label_1> ... <label_k>
//   factor <name> <cardinality> <local|influence|nonlocal>      (one per factor, in order)
//   agent <name> <num_actions> scope <k> <factor names>          (zero or more)
//   table <factor> parents <k> <names> next <k> <names> action <0|1> agents <k> <names> rows <r>
//   <r rows of cardinality values>
//   initial <factor> <cardinality values>
//   policy <agent> rows <r>
//   <r rows of num_actions values>
//   end
//
// Every factor needs exactly one table and one initial block, every agent one
// policy block. Blocks after the declarations may come in any order.

#include <iosfwd>
#include <string>

#include "sbtom/ialm.hpp"

namespace sbtom::ialm::io {

struct ModelFile {
  GlobalModel model;
  Policies policies;
};

ModelFile read_model(std::istream& is);
ModelFile load_model(const std::string& path);
void write_model(std::ostream& os, const GlobalModel& model, const Policies& policies);

}  // namespace sbtom::ialm::io
