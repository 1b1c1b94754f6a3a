#include <cmath>
#include <functional>

#include "doctest.h"
#include "ssga/error.hpp"
#include "ssga/gradcheck.hpp"
#include "ssga/ops.hpp"
#include "ssga/rng.hpp"

using namespace ssga;
using namespace ssga::ad;

namespace {

Tensor randn(RngStream& rng, Shape s, double scale = 1.0) {
    Tensor t = rng.normal_tensor(s);
    for (auto& v : t.data()) v *= scale;
    return t;
}

// Plain-loop evaluation of tanh(W2 tanh(W1 x + b1) + b2), no tape involved.
std::vector<double> mlp_reference(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                                  const std::vector<double>& x) {
    const std::size_t in = w1.dim(0), hidden = w1.dim(1), out = w2.dim(1);
    std::vector<double> h(hidden), y(out);
    for (std::size_t j = 0; j < hidden; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * w1[i * hidden + j];
        h[j] = std::tanh(acc + b1[j]);
    }
    for (std::size_t j = 0; j < out; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hidden; ++i) acc += h[i] * w2[i * out + j];
        y[j] = std::tanh(acc + b2[j]);
    }
    return y;
}

Var mlp(Tape& t, Var x, const std::map<std::string, Tensor>& p) {
    auto w1 = t.parameter("w1", p.at("w1"));
    auto b1 = t.parameter("b1", p.at("b1"));
    auto w2 = t.parameter("w2", p.at("w2"));
    auto b2 = t.parameter("b2", p.at("b2"));
    auto h = ad::tanh(add_row_bias(matmul(x, w1), b1));
    return ad::tanh(add_row_bias(matmul(h, w2), b2));
}

std::map<std::string, Tensor> mlp_params(std::uint64_t seed) {
    RngStream rng(seed, "init");
    return {{"w1", randn(rng, {3, 5}, 0.7)},
            {"b1", randn(rng, {5}, 0.1)},
            {"w2", randn(rng, {5, 2}, 0.7)},
            {"b2", randn(rng, {2}, 0.1)}};
}

}  // namespace

TEST_CASE("forward evaluates simple tapes") {
    Tape t;
    auto z = t.input("z", Tensor::vector({1, 2}));
    auto y = scale(z, 2.0);
    CHECK(y.value() == Tensor::vector({2, 4}));

    Tape id;
    auto z3 = id.input("z", Tensor::vector({3}));
    id.mark_output("y", z3);
    auto out = forward(id, {{"z", Tensor::vector({3})}});
    CHECK(out.at("y") == Tensor::vector({3}));
}

TEST_CASE("forward of an MLP matches a loop re-evaluation") {
    auto p = mlp_params(11);
    std::vector<double> x{0.3, -1.2, 0.8};
    Tape t;
    auto xin = t.input("x", Tensor({1, 3}, x));
    auto y = mlp(t, xin, p);
    auto ref = mlp_reference(p["w1"], p["b1"], p["w2"], p["b2"], x);
    for (std::size_t j = 0; j < ref.size(); ++j) CHECK(y.value()[j] == doctest::Approx(ref[j]).epsilon(1e-15));
}

TEST_CASE("forward reports shape mismatches naming the node") {
    Tape t;
    auto a = t.input("a", Tensor({2, 3}));
    auto b = t.input("b", Tensor({4, 2}));
    try {
        matmul(a, b);
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("node 2") != std::string::npos);
        CHECK(msg.find("matmul") != std::string::npos);
    }

    Tape r;
    auto z = r.input("z", Tensor::vector({1, 2}));
    r.mark_output("y", scale(z, 2.0));
    CHECK_THROWS_AS(forward(r, {{"z", Tensor::vector({1, 2, 3})}}), Error);
}

TEST_CASE("grad of <Az, y> is A^T y exactly") {
    RngStream rng(3, "test");
    Tensor a = randn(rng, {3, 3});
    Tensor y = randn(rng, {3, 1});
    Tape t;
    auto z = t.input("z", randn(rng, {3, 1}));
    auto f = inner(matmul(t.constant(a), z), t.constant(y));
    auto g = t.grad_values(f, std::vector{z}).front();
    for (std::size_t k = 0; k < 3; ++k) {
        double expected = 0.0;
        for (std::size_t i = 0; i < 3; ++i) expected += a[i * 3 + k] * y[i];
        CHECK(std::abs(g[k] - expected) <= 1e-15);
    }

    Tape id;
    auto z2 = id.input("z", Tensor::vector({0.5, -2, 4}));
    auto yv = Tensor::vector({1.5, 2.5, -3.5});
    auto f2 = inner(z2, id.constant(yv));
    CHECK(id.grad_values(f2, std::vector{z2}).front() == yv);
}

TEST_CASE("grad error contract") {
    Tape t;
    auto z = t.input("z", Tensor::vector({1, 2}));
    auto w = t.input("w", Tensor::vector({5, 6}));
    auto vec = scale(z, 3.0);
    CHECK_THROWS_AS(t.grad({vec.id, {z.id}, false}), Error);

    auto f = sum(vec);
    auto grads = t.grad_values(f, std::vector{z, w});
    CHECK(grads[0] == Tensor::vector({3, 3}));
    CHECK(grads[1] == Tensor::vector({0, 0}));  // unreachable -> zero
}

TEST_CASE("grad of a tanh MLP matches central differences") {
    auto p = mlp_params(5);
    Tensor x({2, 3}, {0.2, -0.4, 1.1, -0.7, 0.3, 0.9});
    ScalarBuilder build = [&](Tape& t, const std::map<std::string, Tensor>& params) {
        auto y = mlp(t, t.input("x", x), params);
        return sum(square(y));
    };
    auto report = check_gradient(build, p, 1e-5);
    CHECK(report.checked == 3 * 5 + 5 + 5 * 2 + 2);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("grad is linear in the objective") {
    auto p = mlp_params(8);
    Tensor x({1, 3}, {0.5, 0.1, -0.3});
    const double alpha = 0.75, beta = -2.5;
    auto grads_of = [&](std::function<Var(Var, Var)> combine) {
        Tape t;
        auto y = mlp(t, t.input("x", x), p);
        auto f = sum(square(y));
        auto g = sum(ad::tanh(y));
        std::vector<Var> params;
        for (const auto& [name, id] : t.parameters()) params.push_back({&t, id});
        return t.grad_values(combine(f, g), params);
    };
    auto gf = grads_of([](Var f, Var) { return f; });
    auto gg = grads_of([](Var, Var g) { return g; });
    auto gc = grads_of([&](Var f, Var g) { return add(scale(f, alpha), scale(g, beta)); });
    for (std::size_t k = 0; k < gf.size(); ++k)
        for (std::size_t i = 0; i < gf[k].size(); ++i)
            CHECK(std::abs(gc[k][i] - (alpha * gf[k][i] + beta * gg[k][i])) <= 4 * 2.3e-16 * (1 + std::abs(gc[k][i])));
}

TEST_CASE("identical inputs give bit-identical outputs and gradients") {
    auto run = [] {
        auto p = mlp_params(21);
        Tape t;
        auto y = mlp(t, t.input("x", Tensor({1, 3}, {1, 2, 3})), p);
        auto f = sum(y);
        std::vector<Var> params;
        for (const auto& [name, id] : t.parameters()) params.push_back({&t, id});
        auto g = t.grad_values(f, params);
        g.push_back(y.value());
        return g;
    };
    CHECK(run() == run());
}

TEST_CASE("serialized tapes replay bit-exactly") {
    auto p = mlp_params(4);
    Tape t;
    auto x = t.input("x", Tensor({1, 3}, {0.1, 0.2, 0.3}));
    auto y = mlp(t, x, p);
    t.mark_output("y", y);
    const Tensor recorded = y.value();

    Tape copy = Tape::deserialize(t.serialize());
    CHECK(copy.size() == t.size());
    auto out = forward(copy, {});
    CHECK(out.at("y") == recorded);

    Tensor x2({1, 3}, {-1.0, 0.5, 2.0});
    auto replayed = forward(copy, {{"x", x2}});
    Tape fresh;
    auto y2 = mlp(fresh, fresh.input("x", x2), p);
    CHECK(replayed.at("y") == y2.value());
}

TEST_CASE("leaky relu derivative uses the right limit at zero") {
    Tape t;
    auto x = t.input("x", Tensor::vector({-1.0, 0.0, 2.0}));
    auto f = sum(leaky_relu(x, 0.2));
    CHECK(t.grad_values(f, std::vector{x}).front() == Tensor::vector({0.2, 1.0, 1.0}));
}

TEST_CASE("gradient of the inner-gradient norm for a linear map is y v^T / |v|") {
    RngStream rng(17, "test");
    Tensor y = randn(rng, {3, 1});
    Tensor z = randn(rng, {3, 1});
    std::map<std::string, Tensor> params{{"A", randn(rng, {3, 3})}};
    ScalarBuilder inner_fn = [&](Tape& t, const std::map<std::string, Tensor>& p) {
        auto a = t.parameter("A", p.at("A"));
        auto zv = t.input("z", z);
        return inner(matmul(a, zv), t.constant(y));
    };
    // Analytic: v = A^T y, d|v|/dA_ij = y_i v_j / |v|
    const Tensor& a = params["A"];
    double v[3] = {0, 0, 0};
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) v[j] += a[i * 3 + j] * y[i];
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);

    Tape t;
    auto f = inner_fn(t, params);
    auto zv = *t.find("z");
    auto gz = t.grad({f.id, {zv.id}, true}).front();
    auto penalty = ad::sqrt(sum(square(gz)));
    auto dA = t.grad_values(penalty, std::vector{*t.find("A")}).front();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(dA[i * 3 + j] - y[i] * v[j] / norm) <= 1e-8);

    auto report = grad_of_grad_check(inner_fn, params, Tensor::zeros({3, 1}));
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("penalty gradient is exactly zero for a theta-independent function") {
    std::map<std::string, Tensor> params{{"theta", Tensor::vector({0.3, -0.2})}};
    ScalarBuilder inner_fn = [](Tape& t, const std::map<std::string, Tensor>& p) {
        t.parameter("theta", p.at("theta"));
        auto z = t.input("z", Tensor::vector({1.0, 2.0}));
        return inner(z, t.constant(Tensor::vector({0.5, 0.25})));
    };
    Tape t;
    auto f = inner_fn(t, params);
    auto gz = t.grad({f.id, {t.find("z")->id}, true}).front();
    auto penalty = ad::sqrt(sum(square(sub(gz, t.constant(Tensor::vector({0.1, 0.1}))))));
    auto g = t.grad_values(penalty, std::vector{*t.find("theta")}).front();
    CHECK(g == Tensor::vector({0.0, 0.0}));
}

// ---------------------------------------------------------------------------
// Second-order finite-difference checks, one per primitive. Each builder
// makes f(z; theta) nonlinear enough in z that grad_z f depends on theta.

namespace {

struct PrimitiveCase {
    const char* name;
    Shape z_shape;
    std::map<std::string, Shape> param_shapes;
    std::function<Var(Tape&, Var, std::map<std::string, Var>&)> body;  // returns a tensor
};

void run_second_order(const PrimitiveCase& pc) {
    RngStream rng(fnv1a64(pc.name), "primitive");
    std::map<std::string, Tensor> params;
    for (const auto& [name, shape] : pc.param_shapes) params[name] = randn(rng, shape, 0.6);
    Tensor z = randn(rng, pc.z_shape, 0.8);
    Tensor r;  // probe applied to the primitive's output, fixed per case
    Tensor c;
    ScalarBuilder inner_fn = [&](Tape& t, const std::map<std::string, Tensor>& p) {
        std::map<std::string, Var> vars;
        for (const auto& [name, value] : p) vars[name] = t.parameter(name, value);
        auto zv = t.input("z", z);
        auto out = pc.body(t, zv, vars);
        if (r.size() == 0) r = randn(rng, out.shape());
        // tanh makes the z-gradient depend on theta for every primitive
        return inner(ad::tanh(out), t.constant(r));
    };
    // Fix r and c before the check.
    {
        Tape t;
        inner_fn(t, params);
    }
    c = randn(rng, pc.z_shape, 0.1);
    auto report = grad_of_grad_check(inner_fn, params, c, 1e-5);
    INFO(pc.name << " worst " << report.worst_entry << " rel " << report.max_rel_error);
    CHECK(report.checked > 0);
    CHECK(report.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("double-backprop consistency for every primitive") {
    using M = std::map<std::string, Var>;
    std::vector<PrimitiveCase> cases{
        {"add", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return add(z, p["p"]); }},
        {"sub", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return sub(p["p"], z); }},
        {"mul", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return mul(z, p["p"]); }},
        {"scale", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return scale(mul(z, p["p"]), -1.7); }},
        {"offset", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return offset(mul(z, p["p"]), 0.3); }},
        {"matmul", {2, 3}, {{"w", {3, 4}}}, [](Tape&, Var z, M& p) { return matmul(z, p["w"]); }},
        {"transpose", {2, 3}, {{"w", {2, 4}}}, [](Tape&, Var z, M& p) { return matmul(transpose(z), p["w"]); }},
        {"conv2d", {2, 2, 5, 5}, {{"w", {3, 2, 3, 3}}}, [](Tape&, Var z, M& p) { return conv2d(z, p["w"], 1); }},
        {"conv2d_grad_input", {2, 3, 4, 4}, {{"w", {3, 2, 3, 3}}},
         [](Tape&, Var z, M& p) { return conv2d_grad_input(z, p["w"], {2, 2, 4, 4}, 1); }},
        {"conv2d_grad_weight", {1, 2, 4, 4}, {{"g", {1, 3, 4, 4}}},
         [](Tape&, Var z, M& p) { return conv2d_grad_weight(z, p["g"], {3, 2, 3, 3}, 1); }},
        {"upsample2x", {1, 2, 2, 2}, {{"p", {1, 2, 4, 4}}},
         [](Tape&, Var z, M& p) { return mul(upsample2x(z), p["p"]); }},
        {"mean_pool2x", {1, 2, 4, 4}, {{"p", {1, 2, 2, 2}}},
         [](Tape&, Var z, M& p) { return mul(mean_pool2x(z), p["p"]); }},
        {"broadcast_to", {1, 3}, {{"p", {2, 3}}},
         [](Tape&, Var z, M& p) { return mul(broadcast_to(z, {2, 3}), p["p"]); }},
        {"reduce_sum_to", {2, 3}, {{"p", {1, 3}}},
         [](Tape&, Var z, M& p) { return mul(reduce_sum_to(z, {1, 3}), p["p"]); }},
        {"leaky_relu", {6}, {{"p", {6}}}, [](Tape&, Var z, M& p) { return leaky_relu(add(z, p["p"]), 0.2); }},
        {"tanh", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return ad::tanh(mul(z, p["p"])); }},
        {"sigmoid", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return sigmoid(mul(z, p["p"])); }},
        {"softplus", {4}, {{"p", {4}}}, [](Tape&, Var z, M& p) { return softplus(mul(z, p["p"])); }},
        {"sqrt", {4}, {{"p", {4}}},
         [](Tape&, Var z, M& p) { return ad::sqrt(offset(square(mul(z, p["p"])), 0.5)); }},
        {"safe_reciprocal", {4}, {{"p", {4}}},
         [](Tape&, Var z, M& p) { return safe_reciprocal(offset(square(mul(z, p["p"])), 1.0)); }},
        {"reshape", {2, 3}, {{"p", {3, 2}}}, [](Tape&, Var z, M& p) { return mul(reshape(z, {3, 2}), p["p"]); }},
        {"concat_cols", {2, 2}, {{"p", {2, 3}}, {"q", {2, 5}}},
         [](Tape&, Var z, M& p) { return mul(concat_cols(z, p["p"]), p["q"]); }},
        {"slice_cols", {2, 5}, {{"p", {2, 2}}},
         [](Tape&, Var z, M& p) { return mul(slice_cols(z, 1, 2), p["p"]); }},
        {"pad_cols", {2, 2}, {{"p", {2, 5}}}, [](Tape&, Var z, M& p) { return mul(pad_cols(z, 2, 5), p["p"]); }},
    };
    for (const auto& pc : cases) {
        SUBCASE(pc.name) { run_second_order(pc); }
    }
}
