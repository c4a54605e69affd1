#include <doctest.h>

#include <cmath>
#include <random>

#include "nbcoll/dd.hpp"

using namespace nbcoll;

namespace {

// |a - (hi + lo)| in units of hi
double dd_err(const DoubleDouble& a, double hi, double lo) {
    DoubleDouble d = a - DoubleDouble(hi) - DoubleDouble(lo);
    return std::abs(to_double(d)) / std::abs(hi);
}

}  // namespace

TEST_CASE("error-free transformations") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng) * std::ldexp(1.0, i % 40), b = u(rng);
        auto s = ddimpl::two_sum(a, b);
        CHECK(s.hi == a + b);
        // exactness: (a - hi) + b - lo reorders to zero without rounding
        CHECK((a - s.hi) + b == s.lo);
        auto p = ddimpl::two_prod(a, b);
        CHECK(p.hi == a * b);
        CHECK(std::fma(a, b, -p.hi) == p.lo);
    }
}

TEST_CASE("arithmetic against high-precision references") {
    // references rounded from 50-digit values
    CHECK(dd_err(sqrt(DoubleDouble(2.0)), 1.4142135623730951, -9.667293313452913e-17) < 1e-31);
    CHECK(dd_err(DoubleDouble(1.0) / DoubleDouble(3.0), 0.3333333333333333, 1.850371707708594e-17) < 1e-31);
    CHECK(dd_err(DoubleDouble(0.1) * DoubleDouble(0.7), 0.06999999999999999, 6.661338147750939e-18) < 1e-31);
    CHECK(dd_err(DoubleDouble(0.1) / DoubleDouble(0.7), 0.14285714285714288, -2.8322015934315207e-18) < 1e-31);
}

TEST_CASE("identities and ordering") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int i = 0; i < 200; ++i) {
        DoubleDouble a = DoubleDouble(u(rng)) / DoubleDouble(u(rng));
        DoubleDouble b = DoubleDouble(u(rng)) / DoubleDouble(u(rng));
        CHECK(std::abs(to_double((a + b) - b - a)) < 1e-31);
        CHECK(std::abs(to_double(a * b / b - a)) < 1e-30);
        DoubleDouble r = sqrt(a);
        CHECK(std::abs(to_double(r * r - a)) < 1e-30);
        CHECK((a < b) == (to_double(a - b) < 0.0));
    }
    DoubleDouble tiny = DoubleDouble(1.0) + DoubleDouble(1e-20);
    CHECK(tiny > DoubleDouble(1.0));
    CHECK(tiny.hi == 1.0);
    CHECK(abs(-tiny) == tiny);
    CHECK(isfinite(tiny));
    CHECK_FALSE(isfinite(DoubleDouble(INFINITY)));
    CHECK(sqrt(DoubleDouble(0.0)) == DoubleDouble(0.0));
}
