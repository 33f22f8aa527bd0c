#include "trajcast/ndiff_io.hpp"

#include <ostream>

namespace trajcast::ndiff {

void write_params(std::ostream& out, const ParamStore& params) {
  out << container::kParamsTag << '\n';
  out << "count " << params.entries().size() << '\n';
  for (const auto& [name, e] : params.entries()) {
    out << "param " << name << ' ' << e.value.rows() << ' ' << e.value.cols() << '\n';
    container::write_matrix(out, e.value);
  }
}

ParamStore read_params(container::Reader& in) {
  in.expect_tag(container::kParamsTag);
  const auto count_args = in.section("count", 1);
  const long long count = in.int_arg(count_args, 0);
  if (count < 0) in.fail("negative parameter count");
  ParamStore params;
  for (long long k = 0; k < count; ++k) {
    const auto args = in.section("param", 3);
    const long long rows = in.int_arg(args, 1);
    const long long cols = in.int_arg(args, 2);
    if (rows < 0 || cols < 0) in.fail("negative parameter shape");
    if (params.contains(args[0])) in.fail("duplicate parameter '" + args[0] + "'");
    params.add(args[0], in.matrix(rows, cols));
  }
  return params;
}

}  // namespace trajcast::ndiff
