#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "gradient_check.hpp"

using namespace expabs;

TEST_CASE("d_err_d_tau") {
    // factor (1 - ssq/|tau|) vanishes when ssq == |tau|
    const std::vector<double> e{2.0};  // ssq = 4 exactly
    CHECK(d_err_d_tau(e, Tau{4.0}) == 0.0);

    const std::vector<double> zero{0.0};
    CHECK(d_err_d_tau(zero, Tau{3.0}) == doctest::Approx(1.0));
    CHECK(d_err_d_tau(zero, Tau{-3.0}) == doctest::Approx(-1.0));

    const std::vector<double> one{1.0};  // ssq = 1, tau = 2
    CHECK(d_err_d_tau(one, Tau{2.0}) == doctest::Approx(0.8243606).epsilon(1e-6));
    // the same value from a central finite difference in tau
    auto f = [&](double t) { return err_expabs(one, Tau{t}); };
    const double h = 1e-6;
    CHECK(d_err_d_tau(one, Tau{2.0}) ==
          doctest::Approx((f(2.0 + h) - f(2.0 - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("d_err_d_output") {
    const std::vector<double> zero{0.0, 0.0};
    CHECK(d_err_d_output(zero, Tau{1.0}, 0) == 0.0);

    const std::vector<double> e{0.5};
    CHECK(d_err_d_output(e, Tau{1.0}, 0) == doctest::Approx(-1.2840254).epsilon(1e-6));
    const std::vector<double> eneg{-0.5};
    CHECK(d_err_d_output(eneg, Tau{1.0}, 0) ==
          doctest::Approx(-d_err_d_output(e, Tau{1.0}, 0)));
    CHECK_THROWS(d_err_d_output(e, Tau{1.0}, 3));
}

TEST_CASE("per-edge derivative factors") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 1};
    spec.init_range = 0.0;
    Network net = init_network(spec);
    net.weights[0](1, 0) = 1.0;
    const ForwardTrace tr = forward(net, std::vector<double>{0.0});  // activation 0.5

    CHECK(layer_output_derivative(tr, net, 1, 0, 1) == doctest::Approx(0.25));
    net.weights[0](1, 0) = 0.0;
    CHECK(layer_output_derivative(tr, net, 1, 0, 1) == 0.0);
    // bias upstream output is 1
    CHECK(weight_derivative(tr, net, 1, 0, 0) == doctest::Approx(0.25));
    // upstream activation 0 kills the weight derivative
    const ForwardTrace tr0 = forward(net, std::vector<double>{0.0});
    CHECK(weight_derivative(tr0, net, 1, 1, 0) == 0.0);
    CHECK_THROWS(weight_derivative(tr, net, 2, 0, 0));
}

TEST_CASE("finite_difference_gradient") {
    auto square = [](std::span<const double> x) { return x[0] * x[0]; };
    const std::vector<double> x{3.0};
    CHECK(finite_difference_gradient(square, x, 1e-6)[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto constant = [](std::span<const double>) { return 4.2; };
    const std::vector<double> x3{1.0, 2.0, 3.0};
    for (double g : finite_difference_gradient(constant, x3, 1e-6)) CHECK(g == 0.0);
    CHECK_THROWS(finite_difference_gradient(square, x, 0.0));
}

TEST_CASE("extended jacobian shape and zero-error structure") {
    // Iris-sized setup: (5*7 + 8*3 + 1) x 150
    Network net = gradcheck::random_network({4, 7, 3}, 1);
    Matrix x, t;
    gradcheck::random_batch(x, t, 4, 3, 150, 2, true);
    const JacobianBuild b = build_extended_jacobian(net, x, t, Tau{1.0}, true);
    CHECK(b.j.rows == 60);
    CHECK(b.j.cols == 150);
    CHECK(b.j.all_finite());

    // zero errors: weight rows vanish, tau row = sign(tau)
    Matrix x1(1, 2), t1(1, 2);
    x1(0, 0) = 0.2;
    x1(0, 1) = 0.8;
    Network small = gradcheck::random_network({2, 2}, 3);
    const ForwardTrace tr = forward(small, x1.row(0));
    t1(0, 0) = tr.output()[0];
    t1(0, 1) = tr.output()[1];
    const JacobianBuild bz = build_extended_jacobian(small, x1, t1, Tau{2.0}, true);
    for (std::size_t i = 0; i + 1 < bz.j.rows; ++i) CHECK(bz.j(i, 0) == doctest::Approx(0.0));
    CHECK(bz.j(bz.j.rows - 1, 0) == doctest::Approx(1.0));
    const JacobianBuild bn = build_extended_jacobian(small, x1, t1, Tau{-2.0}, true);
    CHECK(bn.j(bn.j.rows - 1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("residual vectors") {
    Network net = gradcheck::random_network({2, 3, 2}, 5);
    Matrix x, t;
    gradcheck::random_batch(x, t, 2, 2, 8, 6, true);
    const Tau tau{0.8};
    const JacobianBuild b = build_extended_jacobian(net, x, t, tau, true);
    REQUIRE(b.residual_collapsed.size() == 8);
    for (std::size_t p = 0; p < 8; ++p) {
        const ForwardTrace tr = forward(net, x.row(p));
        double collapsed = 0.0;
        std::vector<double> e(2);
        for (std::size_t n = 0; n < 2; ++n) {
            e[n] = t(p, n) - tr.output()[n];
            collapsed += e[n];
        }
        CHECK(b.residual_collapsed[p] == doctest::Approx(collapsed).epsilon(1e-12));
        CHECK(b.residual_error[p] == doctest::Approx(err_expabs(e, tau)).epsilon(1e-12));
    }
    std::vector<double> scratch;
    auto rm = b.residual(ResidualKind::pattern_error_minus_floor, scratch, 0.8);
    for (std::size_t p = 0; p < 8; ++p)
        CHECK(rm[p] == doctest::Approx(b.residual_error[p] - 0.8));
}

TEST_CASE("tau-row sign symmetry") {
    Network net = gradcheck::random_network({3, 4, 2}, 7);
    Matrix x, t;
    gradcheck::random_batch(x, t, 3, 2, 5, 8, true);
    const JacobianBuild bp = build_extended_jacobian(net, x, t, Tau{1.7}, true);
    const JacobianBuild bn = build_extended_jacobian(net, x, t, Tau{-1.7}, true);
    const std::size_t last = bp.j.rows - 1;
    for (std::size_t p = 0; p < 5; ++p) {
        CHECK(bp.j(last, p) == doctest::Approx(-bn.j(last, p)));
        for (std::size_t i = 0; i < last; ++i) CHECK(bp.j(i, p) == bn.j(i, p));
    }
}

TEST_CASE("jacobian rows follow the canonical flatten order") {
    Network net = gradcheck::random_network({2, 2, 2}, 9);
    Matrix x, t;
    gradcheck::random_batch(x, t, 2, 2, 1, 10, true);
    const Tau tau{1.3};
    const JacobianBuild b = build_extended_jacobian(net, x, t, tau, true);
    std::vector<double> params = net.flatten();
    params.push_back(tau.value);
    auto f = [&](std::span<const double> q) { return gradcheck::pattern_err(net, x, t, 0, q); };
    const std::vector<double> grad = finite_difference_gradient(f, params, 1e-6);
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(b.j(i, 0) == doctest::Approx(grad[i]).epsilon(1e-5));
}

TEST_CASE("analytic matches central finite differences over random triples") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dlogtau(std::log(0.05), std::log(1e4));
    std::uniform_int_distribution<int> dsign(0, 1);
    for (int k = 0; k < 40; ++k) {
        Network net = gradcheck::random_network({2, 2, 2}, 100 + k);
        Matrix x, t;
        gradcheck::random_batch(x, t, 2, 2, 3, 200 + k, true);
        const double tau = (dsign(rng) ? 1.0 : -1.0) * std::exp(dlogtau(rng));
        const gradcheck::Deviation dev = gradcheck::check_jacobian(net, x, t, tau);
        CHECK(dev.worst <= 1.0);  // scaled: 1.0 sits exactly at tolerance
    }
}
