#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace treeseg {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; carries a 1-based line number when one is known.
struct ParseError : Error {
    explicit ParseError(const std::string& msg, long line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_number(line) {}
    long line_number = 0;
};

// A partition or tree violates its structural invariants.
struct StructureError : Error {
    using Error::Error;
};

// Numerical or data-consistency violation (non-finite values, dimension
// mismatch, negative variance beyond the cancellation guard).
struct IntegrityError : Error {
    using Error::Error;
};

// Embedding backend failed after retries were exhausted.
struct BackendError : Error {
    using Error::Error;
};

// Unusable configuration (bad credentials, empty method list, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Input too small or otherwise degenerate for the requested computation.
struct DegenerateInputError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic hashing and pseudo-randomness
//
// Both generators are fixed by constant, not by platform, so that cache keys,
// seeded baselines and evaluation seed schedules reproduce bit-for-bit
// everywhere.
// ---------------------------------------------------------------------------

// FNV-1a, 64-bit.
inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 14695981039346656037ULL) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= static_cast<uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// SplitMix64 (Steele, Lea, Flood 2014).
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound). Modulo reduction; the bias is ~bound/2^64 and
    // irrelevant at the bounds used here.
    uint64_t next_below(uint64_t bound) {
        return bound == 0 ? 0 : next() % bound;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    uint64_t state_;
};

inline std::string to_hex16(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

}  // namespace treeseg
