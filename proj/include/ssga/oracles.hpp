#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssga/nets.hpp"

namespace ssga {

/// Conv generator small enough for exhaustive finite differences (< 1k
/// parameters). tanh keeps second-order checks away from kinks.
GeneratorSpec oracle_generator();

/// G^l(z) = A z with A of shape (d, d): the tap is a (d, 1, 1) feature map.
GeneratorSpec linear_tap_generator(std::size_t d);
/// Parameters for linear_tap_generator with A given row-major.
ParameterSet linear_tap_params(const GeneratorSpec& spec, const std::vector<double>& a_rowmajor);

struct OracleResult {
    std::string name;
    bool pass = false;
    double value = 0.0;      // the measured error (or the count of mismatches)
    double tolerance = 0.0;  // pass iff value <= tolerance (or < for strict checks)
    double seconds = 0.0;
    std::string detail;
};

// Each oracle builds its inputs from `seed` and compares against an
// independent reference (finite differences or a closed form).
OracleResult oracle_first_order(std::uint64_t seed);   // reverse mode vs central differences
OracleResult oracle_second_order(std::uint64_t seed);  // gradient of an inner-gradient penalty
OracleResult oracle_ss_gradient(std::uint64_t seed);   // dL_SS / d theta_t, max rel err < 1e-4
OracleResult oracle_jvp(std::uint64_t seed);           // A^T y to 1e-10, identity tap returns y
OracleResult oracle_d_loss(std::uint64_t seed);        // N=1 bit-equality and uniform mean to 1e-12
OracleResult oracle_frechet(std::uint64_t seed);       // offset 2 -> 4 +- 1e-6, identical -> 0 +- 1e-8

std::vector<OracleResult> oracle_suite(std::uint64_t seed);

}  // namespace ssga
