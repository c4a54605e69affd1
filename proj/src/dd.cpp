#include "nbcoll/dd.hpp"

#include <cmath>
#include <cstdio>

namespace nbcoll {

std::string to_string(const DoubleDouble& a, int digits) {
    if (!isfinite(a)) return std::to_string(a.hi);
    if (a.hi == 0.0) return "0";
    DoubleDouble x = abs(a);
    int e = static_cast<int>(std::floor(std::log10(x.hi)));
    DoubleDouble scale(1.0);
    DoubleDouble ten(10.0);
    for (int i = 0; i < std::abs(e); ++i) scale = scale * ten;
    x = e >= 0 ? x / scale : x * scale;
    // fix off-by-one from log10 rounding
    while (x.hi >= 10.0) { x = x / ten; ++e; }
    while (x.hi < 1.0) { x = x * ten; --e; }

    std::string mant;
    for (int i = 0; i < digits; ++i) {
        int d = static_cast<int>(std::floor(x.hi));
        if (d < 0) d = 0;
        if (d > 9) d = 9;
        mant.push_back(static_cast<char>('0' + d));
        x = (x - DoubleDouble(static_cast<double>(d))) * ten;
    }
    std::string out = a.hi < 0 ? "-" : "";
    out += mant.substr(0, 1);
    out += ".";
    out += mant.substr(1);
    char buf[16];
    std::snprintf(buf, sizeof buf, "e%+d", e);
    out += buf;
    return out;
}

}  // namespace nbcoll
