#pragma once

// trajcast-params/1: a count line, then per parameter (lexicographic order)
// "param <name> <rows> <cols>" followed by `rows` lines of row-major values.

#include <iosfwd>

#include "trajcast/container.hpp"
#include "trajcast/ndiff.hpp"

namespace trajcast::ndiff {

void write_params(std::ostream& out, const ParamStore& params);
ParamStore read_params(container::Reader& in);

}  // namespace trajcast::ndiff
