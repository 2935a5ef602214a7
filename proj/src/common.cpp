#include "pwm/common.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pwm {

double pairwise_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

int max_threads() {
#ifdef _OPENMP
    int hw = omp_get_max_threads();
    if (const char* env = std::getenv("PIECEWISE_MARKET_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < hw) return cap;
    }
    return hw;
#else
    return 1;
#endif
}

}  // namespace pwm
