#pragma once

#include "ssga/nets.hpp"
#include "ssga/oracles.hpp"

namespace ssga::testing {

inline GeneratorSpec tiny_generator() { return oracle_generator(); }
using ssga::linear_tap_generator;

}  // namespace ssga::testing
