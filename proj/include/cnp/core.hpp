#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cnp {

/// Discrete simulation time, measured in ticks.
using LogicalTime = std::uint64_t;
using AgentId = std::string;
using TaskId = std::string;

// ---------------------------------------------------------------------------
// Error taxonomy. Operational failures derive from Error; misuse of the
// library (broken preconditions) throws std::logic_error subtypes instead.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid run configuration (bad counts, unknown keys, malformed values).
struct ConfigError : Error {
    using Error::Error;
};

/// A trace line or payload that does not match the wire format.
struct ParseError : Error {
    using Error::Error;
};

/// A performative keyword outside the known dialect vocabularies.
struct DialectError : Error {
    using Error::Error;
};

/// Envelope cannot be serialized (oversized payload, separator in a field).
struct EncodeError : Error {
    using Error::Error;
};

/// Message addressed to an agent the network does not know.
struct RoutingError : Error {
    using Error::Error;
};

/// Event queue still had work past the tick budget.
struct TimeoutError : Error {
    std::vector<std::string> stuck_conversations;

    TimeoutError(const std::string& msg, std::vector<std::string> stuck)
        : Error(msg), stuck_conversations(std::move(stuck)) {}
};

// ---------------------------------------------------------------------------
// Deterministic helpers
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a. Used for scenario hashes and byte-level trace comparisons.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 1469598103934665603ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Seeded RNG wrapper. mt19937_64 is fully specified by the standard and the
/// draw pattern here avoids std::shuffle / std::uniform_int_distribution,
/// whose outputs vary across standard library implementations. Trace bytes
/// must not depend on the toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform-ish draw in [0, n). n == 0 yields 0.
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    /// Fisher-Yates with explicit draws.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Compact numeric formatting for payload values ("12", "0.6", "0.25").
inline std::string fmt_num(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return buf;
}

inline std::string fmt_num(std::uint64_t value) { return std::to_string(value); }

inline std::uint64_t parse_u64(std::string_view text, std::string_view field) {
    if (text.empty()) {
        throw ParseError("empty value for field '" + std::string(field) + "'");
    }
    std::uint64_t value = 0;
    for (char c : text) {
        if (c < '0' || c > '9') {
            throw ParseError("field '" + std::string(field) + "' is not an unsigned integer: '" +
                             std::string(text) + "'");
        }
        value = value * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return value;
}

inline double parse_double(std::string_view text, std::string_view field) {
    try {
        std::size_t used = 0;
        std::string owned(text);
        double value = std::stod(owned, &used);
        if (used != owned.size()) {
            throw ParseError("trailing characters in field '" + std::string(field) + "'");
        }
        return value;
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError("field '" + std::string(field) + "' is not a number: '" +
                         std::string(text) + "'");
    }
}

}  // namespace cnp
