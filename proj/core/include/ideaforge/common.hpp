#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ideaforge {

// =============================================================================
// Errors
// =============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input that could not be parsed (bad JSONL line, bad completion).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input parsed but violates a domain invariant or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// External model/transport failure (after retries are exhausted).
class ProviderError : public Error {
public:
    using Error::Error;
};

// =============================================================================
// Logging — tiny stderr logger, level via IDEAFORGE_LOG (debug|info|warn|off)
// =============================================================================

namespace log {
void info(const std::string& msg);
void warn(const std::string& msg);
void debug(const std::string& msg);
} // namespace log

// =============================================================================
// Deterministic randomness
//
// All stochastic code paths draw through Rng so runs are bit-reproducible
// across platforms (no implementation-defined std::*_distribution).
// =============================================================================

uint64_t splitmix64(uint64_t& state);

/// Derive an independent stream seed from a base seed.
uint64_t mix_seed(uint64_t base, uint64_t stream);

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, unbiased.
    std::size_t below(std::size_t n);

    /// Standard normal via Box-Muller on canonical doubles.
    double next_gaussian();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// =============================================================================
// Text helpers
// =============================================================================

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

/// Lowercase alphanumeric word tokens (non-alnum bytes split).
std::vector<std::string> tokenize_words(std::string_view s);

/// Split prose into sentence-like pieces on ./!/?/newline boundaries.
std::vector<std::string> split_sentences(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// =============================================================================
// Hashing & files
// =============================================================================

uint64_t fnv1a64(std::string_view s);

/// Hex digest used for manifest change detection (FNV-1a over content).
std::string content_hash_hex(std::string_view bytes);
std::string file_hash_hex(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

/// Write via temp file + rename so readers never observe partial content.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Parse a JSONL file; callback receives (1-based line number, raw line).
void for_each_jsonl_line(const std::filesystem::path& path,
                         const std::function<void(std::size_t, const std::string&)>& fn);

// =============================================================================
// Bounded parallelism with deterministic, index-ordered results
// =============================================================================

void parallel_for(std::size_t count, int max_workers,
                  const std::function<void(std::size_t)>& fn);

/// Formats a double with shortest round-trip representation (std::to_chars).
std::string format_double(double v);

} // namespace ideaforge
