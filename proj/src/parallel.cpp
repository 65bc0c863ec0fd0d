#include "icas/parallel.hpp"

#include <cmath>
#include <cstdlib>

#include "icas/numfmt.hpp"

namespace icas {

std::size_t default_workers() {
  if (const char* env = std::getenv("ICAS_AUDIT_THREADS")) {
    const auto v = parse_real(env);
    if (v && *v >= 1 && *v == std::floor(*v)) return static_cast<std::size_t>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace icas
