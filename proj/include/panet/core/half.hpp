#pragma once

#include <cstdint>
#include <cstring>

namespace panet {

// Round-trip through IEEE half precision (round to nearest even); used to
// simulate mixed-precision storage of conv inputs and outputs.
inline float half_round(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    const uint32_t sign = (x >> 16) & 0x8000u;
    const int32_t exp = static_cast<int32_t>((x >> 23) & 0xff) - 127 + 15;
    uint32_t mant = x & 0x7fffffu;
    uint16_t h;
    if (((x >> 23) & 0xff) == 0xff) {
        h = static_cast<uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0));  // inf / nan
    } else if (exp >= 31) {
        h = static_cast<uint16_t>(sign | 0x7c00u);  // overflow to inf
    } else if (exp <= 0) {
        if (exp < -10) {
            h = static_cast<uint16_t>(sign);  // underflow to zero
        } else {
            mant |= 0x800000u;
            const int shift = 14 - exp;
            uint32_t sub = mant >> shift;
            const uint32_t rem = mant & ((1u << shift) - 1);
            const uint32_t halfway = 1u << (shift - 1);
            if (rem > halfway || (rem == halfway && (sub & 1))) ++sub;
            h = static_cast<uint16_t>(sign | sub);
        }
    } else {
        uint32_t out = static_cast<uint32_t>(exp) << 10 | (mant >> 13);
        const uint32_t rem = mant & 0x1fffu;
        if (rem > 0x1000u || (rem == 0x1000u && (out & 1))) ++out;
        h = static_cast<uint16_t>(sign | out);
    }
    // expand back
    const uint32_t hs = (h & 0x8000u) << 16;
    const uint32_t he = (h >> 10) & 0x1f;
    const uint32_t hm = h & 0x3ffu;
    uint32_t outbits;
    if (he == 0x1f) {
        outbits = hs | 0x7f800000u | (hm << 13);
    } else if (he == 0) {
        if (hm == 0) {
            outbits = hs;
        } else {
            int e = -1;
            uint32_t m = hm;
            while (!(m & 0x400u)) {
                m <<= 1;
                ++e;
            }
            outbits = hs | static_cast<uint32_t>(127 - 15 - e) << 23 | ((m & 0x3ffu) << 13);
        }
    } else {
        outbits = hs | ((he + 127 - 15) << 23) | (hm << 13);
    }
    float out;
    std::memcpy(&out, &outbits, 4);
    return out;
}

}  // namespace panet
