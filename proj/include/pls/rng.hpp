#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "pls/mat.hpp"

namespace pls {

// Counter-based generator (Philox 4x32, 10 rounds). A stream is addressed
// by (seed, stream_id); distinct stream ids give statistically independent
// sequences, so parallel trials can draw without coordination and a run is
// reproducible from the seed alone.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on the open interval (0,1) with 53-bit resolution.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via the polar method; one spare is cached per pair.
    double next_gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_uniform() - 1.0;
            v = 2.0 * next_uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

private:
    static void mul_hi_lo(std::uint32_t x, std::uint32_t y, std::uint32_t& hi, std::uint32_t& lo) {
        const std::uint64_t prod = static_cast<std::uint64_t>(x) * static_cast<std::uint64_t>(y);
        hi = static_cast<std::uint32_t>(prod >> 32);
        lo = static_cast<std::uint32_t>(prod);
    }

    void refill() {
        constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
        std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(block_),
                                            static_cast<std::uint32_t>(block_ >> 32),
                                            stream_[0], stream_[1]};
        std::uint32_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            std::uint32_t hi0, lo0, hi1, lo1;
            mul_hi_lo(m0, ctr[0], hi0, lo0);
            mul_hi_lo(m1, ctr[2], hi1, lo1);
            ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
            k0 += w0;
            k1 += w1;
        }
        buf_ = ctr;
        ++block_;
        pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Vec gauss_vector(RngStream& rng, std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = rng.next_gauss();
    return v;
}

inline Mat gauss_matrix(RngStream& rng, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (auto& x : m.a) x = rng.next_gauss();
    return m;
}

// Uniform direction on the unit sphere in R^n.
inline Vec unit_sphere_vector(RngStream& rng, std::size_t n) {
    Vec v = gauss_vector(rng, n);
    double nrm = norm2(v);
    while (nrm == 0.0) {
        v = gauss_vector(rng, n);
        nrm = norm2(v);
    }
    for (auto& x : v) x /= nrm;
    return v;
}

}  // namespace pls
