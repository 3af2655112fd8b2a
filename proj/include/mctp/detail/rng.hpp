#ifndef MCTP_DETAIL_RNG_HPP
#define MCTP_DETAIL_RNG_HPP

#include <cstdint>

namespace mctp::detail {

// splitmix64 step (Steele, Lea, Flood 2014). Used both as a stream generator
// and as a seed mixer so that derived seeds decorrelate even for adjacent
// inputs like replicate indices 0,1,2,...
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic sub-stream seed from a master seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s = a ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    std::uint64_t b = splitmix64(s);
    splitmix64(s);
    return b ^ s;
}

// Small self-contained generator with a splitmix64 core; enough state for
// bootstrap sign draws and uniform variates, independent of the standard
// library's unspecified engine internals.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform strictly inside (0, 1); safe to feed to quantile transforms
    double next_open01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~0ULL; }
    result_type operator()() { return next_u64(); }

private:
    std::uint64_t state_;
};

} // namespace mctp::detail

#endif
