#include "ssga/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ssga/error.hpp"
#include "ssga/ops.hpp"

namespace ssga::ad {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<Var> parameter_vars(Tape& tape, const std::map<std::string, Tensor>& params) {
    std::vector<Var> vars;
    for (const auto& [name, _] : params) {
        auto v = tape.find(name);
        if (!v) throw config_error("gradcheck: builder did not create parameter '" + name + "'");
        vars.push_back(*v);
    }
    return vars;
}

Var penalty_on_tape(Tape& tape, const ScalarBuilder& inner, const std::map<std::string, Tensor>& params,
                    const Tensor& c, bool create_graph) {
    Var f = inner(tape, params);
    auto z = tape.find("z");
    if (!z) throw config_error("gradcheck: inner builder must create an input named 'z'");
    auto gz = tape.grad({f.id, {z->id}, create_graph}).front();
    if (!create_graph) gz = tape.constant(gz.value());
    auto diff = sub(gz, tape.constant(c));
    return sqrt(sum(square(diff)));
}

template <class Eval>
GradCheckReport compare(const std::map<std::string, Tensor>& params, const std::vector<Tensor>& analytic,
                        Eval eval, double h) {
    GradCheckReport report;
    std::size_t k = 0;
    for (const auto& [name, value] : params) {
        const Tensor& a = analytic[k++];
        for (std::size_t i = 0; i < value.size(); ++i) {
            auto plus = params;
            auto minus = params;
            plus[name][i] += h;
            minus[name][i] -= h;
            const double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
            const double rel = relative_error(a[i], numeric);
            const double abs_err = std::abs(a[i] - numeric);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_entry = name + "[" + std::to_string(i) + "]";
            }
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            ++report.checked;
        }
    }
    return report;
}

}  // namespace

GradCheckReport check_gradient(const ScalarBuilder& build, const std::map<std::string, Tensor>& params, double h) {
    Tape tape;
    Var f = build(tape, params);
    auto vars = parameter_vars(tape, params);
    auto analytic = tape.grad_values(f, vars);
    auto eval = [&](const std::map<std::string, Tensor>& p) {
        Tape t;
        return build(t, p).value().item();
    };
    return compare(params, analytic, eval, h);
}

double inner_gradient_penalty(const ScalarBuilder& inner, const std::map<std::string, Tensor>& params,
                              const Tensor& c) {
    Tape tape;
    return penalty_on_tape(tape, inner, params, c, false).value().item();
}

GradCheckReport grad_of_grad_check(const ScalarBuilder& inner, const std::map<std::string, Tensor>& params,
                                   const Tensor& c, double h) {
    Tape tape;
    Var penalty = penalty_on_tape(tape, inner, params, c, true);
    auto vars = parameter_vars(tape, params);
    auto analytic = tape.grad_values(penalty, vars);
    auto eval = [&](const std::map<std::string, Tensor>& p) { return inner_gradient_penalty(inner, p, c); };
    return compare(params, analytic, eval, h);
}

}  // namespace ssga::ad
