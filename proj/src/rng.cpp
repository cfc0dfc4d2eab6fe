#include "diffgate/rng.hpp"

#include <cmath>

namespace diffgate {

double Rng::next_normal() {
    // u1 in (0,1] so the log is finite.
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace diffgate
