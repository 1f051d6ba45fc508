#pragma once

#include <stdexcept>
#include <string>

namespace conclab {

// Invalid argument supplied by the caller (bad dimension, out-of-range parameter, ...).
struct input_error : std::invalid_argument {
    explicit input_error(const std::string& what) : std::invalid_argument(what) {}
};

// Mathematically inadmissible input (non-PSD matrix where PSD is required, divergent
// Orlicz expectation, ...).
struct domain_error : std::domain_error {
    explicit domain_error(const std::string& what) : std::domain_error(what) {}
};

// An exact computation was requested beyond the enumeration capacity. Never silently
// degraded to sampling; the caller must choose a Monte Carlo route explicitly.
struct capacity_error : std::length_error {
    explicit capacity_error(const std::string& what) : std::length_error(what) {}
};

// A Monte Carlo evaluator produced a non-finite value; carries the replicate index.
struct replicate_error : std::runtime_error {
    replicate_error(std::size_t replicate, const std::string& what)
        : std::runtime_error("replicate " + std::to_string(replicate) + ": " + what),
          replicate_index(replicate) {}
    std::size_t replicate_index;
};

// Malformed configuration file or CLI usage.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace conclab
