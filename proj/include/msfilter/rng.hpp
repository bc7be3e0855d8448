#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace msfilter {

// Counter-based stream built on Philox4x32-10 (Salmon et al., SC 2011).
// A stream is fully identified by (seed, stream_id): the same pair always
// reproduces the same variate sequence, and distinct stream_ids give
// statistically independent streams. No global state.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream_id)),
          stream_hi_(static_cast<std::uint32_t>(stream_id >> 32)) {}

    std::uint64_t next_u64() {
        if (buf_pos_ >= 4) refill();
        const std::uint32_t lo = buf_[buf_pos_++];
        const std::uint32_t hi = buf_[buf_pos_++];
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    }

    // Uniform on (0,1); never returns an exact endpoint.
    double uniform() {
        const std::uint64_t v = next_u64() >> 11;
        return (static_cast<double>(v) + 0.5) * (1.0 / 9007199254740992.0);
    }

    // Standard Gaussian via Box-Muller; pairs are cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    void refill() {
        std::uint32_t c0 = static_cast<std::uint32_t>(block_);
        std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
        std::uint32_t c2 = stream_lo_;
        std::uint32_t c3 = stream_hi_;
        std::uint32_t k0 = key_[0];
        std::uint32_t k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = 0xD2511F53ULL * c0;
            const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
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
            k0 += 0x9E3779B9U;
            k1 += 0xBB67AE85U;
        }
        buf_ = {c0, c1, c2, c3};
        buf_pos_ = 0;
        ++block_;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_lo_;
    std::uint32_t stream_hi_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace msfilter
