#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssga/tape.hpp"

namespace ssga::ad {

/// Builds a scalar on a fresh tape from the given parameter values.
/// Parameter leaves must be created with Tape::parameter using the map keys.
using ScalarBuilder = std::function<Var(Tape&, const std::map<std::string, Tensor>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_entry;  // "<param>[<index>]"
    std::size_t checked = 0;
};

/// Relative error used throughout the checks: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares reverse-mode gradients of `build` against central finite
/// differences with step `h` for every entry of every parameter.
GradCheckReport check_gradient(const ScalarBuilder& build, const std::map<std::string, Tensor>& params,
                               double h = 1e-5);

/// Second-order check. Builds the penalty ||grad_z f(z; theta) - c||_2 on the
/// tape with create_graph, differentiates it w.r.t. the parameters and
/// compares against central finite differences of the penalty, where each
/// penalty evaluation recomputes the inner gradient independently.
/// `inner` must create an input leaf named "z" and parameter leaves.
GradCheckReport grad_of_grad_check(const ScalarBuilder& inner, const std::map<std::string, Tensor>& params,
                                   const Tensor& c, double h = 1e-5);

/// The penalty used by grad_of_grad_check, evaluated on a fresh tape.
double inner_gradient_penalty(const ScalarBuilder& inner, const std::map<std::string, Tensor>& params,
                              const Tensor& c);

}  // namespace ssga::ad
