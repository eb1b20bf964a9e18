#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace flowmorph {

/// Philox4x32-10 counter-based generator. Stateless per block: the value of
/// block k depends only on (key, k), so streams are splittable by key and
/// reproducible regardless of evaluation order.
class Philox4x32 {
public:
    explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          ctr_hi0_(static_cast<std::uint32_t>(stream)),
          ctr_hi1_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::array<std::uint32_t, 4> block(std::uint64_t counter) const {
        std::uint32_t c0 = static_cast<std::uint32_t>(counter);
        std::uint32_t c1 = static_cast<std::uint32_t>(counter >> 32);
        std::uint32_t c2 = ctr_hi0_;
        std::uint32_t c3 = ctr_hi1_;
        std::uint32_t k0 = key0_;
        std::uint32_t k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = mul_a * static_cast<std::uint64_t>(c0);
            const std::uint64_t p1 = mul_b * static_cast<std::uint64_t>(c2);
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += weyl_a;
            k1 += weyl_b;
        }
        return {c0, c1, c2, c3};
    }

private:
    static constexpr std::uint32_t mul_a = 0xD2511F53u;
    static constexpr std::uint32_t mul_b = 0xCD9E8D57u;
    static constexpr std::uint32_t weyl_a = 0x9E3779B9u;
    static constexpr std::uint32_t weyl_b = 0xBB67AE85u;

    std::uint32_t key0_, key1_;
    std::uint32_t ctr_hi0_, ctr_hi1_;
};

/// Deterministic vector of standard normal samples for (seed, stream).
/// Box-Muller over Philox lanes; each 128-bit block yields four samples.
inline std::vector<double> standard_normals(std::uint64_t seed, std::uint64_t stream,
                                            std::size_t count) {
    const Philox4x32 gen(seed, stream);
    std::vector<double> out;
    out.reserve(count + 3);
    constexpr double two_pi = 6.283185307179586476925286766559;
    constexpr double inv32 = 1.0 / 4294967296.0;  // 2^-32
    for (std::uint64_t k = 0; out.size() < count; ++k) {
        const auto w = gen.block(k);
        for (int half = 0; half < 2; ++half) {
            const double u1 = (static_cast<double>(w[2 * half]) + 1.0) * inv32;  // (0, 1]
            const double u2 = static_cast<double>(w[2 * half + 1]) * inv32;      // [0, 1)
            const double r = std::sqrt(-2.0 * std::log(u1));
            out.push_back(r * std::cos(two_pi * u2));
            out.push_back(r * std::sin(two_pi * u2));
        }
    }
    out.resize(count);
    return out;
}

}  // namespace flowmorph
