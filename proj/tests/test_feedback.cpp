#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "spde/feedback.hpp"

using namespace spde;

namespace {

const Domain1D kDomainPi(kPi);
const double kHalfPi = kPi / 2.0;

SpectralCalibration calibrate_half(const EigenBasis& basis, std::vector<double> grid) {
    const ControlRegion half({{0.0, kHalfPi}}, kDomainPi);
    return calibrate_spectral_constant(half, basis, std::move(grid));
}

} // namespace

TEST_CASE("gain formula and mode counts") {
    const EigenBasis basis(kDomainPi, 8);
    const ControlRegion full({{0.0, kPi}}, kDomainPi);
    const SpectralCalibration cal = calibrate_spectral_constant(full, basis, {1.0, 4.0});

    const FeedbackLaw law4 = build_feedback(4.0, full, basis, cal);
    CHECK(law4.n_low == 2);
    CHECK(law4.gain == doctest::Approx(std::exp(2.0) * 4.0).epsilon(1e-14)); // C = 1

    const FeedbackLaw law1 = build_feedback(1.0, full, basis, cal);
    CHECK(law1.n_low == 1);
    CHECK(law1.gain == doctest::Approx(std::exp(1.0)).epsilon(1e-14));

    CHECK_THROWS_AS(build_feedback(9.0, full, basis, cal), validation_error); // not in grid
    CHECK_THROWS_AS(build_feedback(0.5, full, basis, cal), validation_error); // N = 0
}

TEST_CASE("gain with the calibrated half-domain constant") {
    const EigenBasis basis(kDomainPi, 12);
    const SpectralCalibration cal = calibrate_half(basis, {1.0, 4.0, 9.0});
    const FeedbackLaw law = build_feedback(9.0, ControlRegion({{0.0, kHalfPi}}, kDomainPi), basis, cal);
    CHECK(law.n_low == 3);
    const double expect = cal.constant_C * std::exp(3.0 * cal.constant_C) * 9.0;
    CHECK(law.gain == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("truncation guard M >= 2 N_lambda") {
    const EigenBasis basis(kDomainPi, 3);
    const ControlRegion full({{0.0, kPi}}, kDomainPi);
    const SpectralCalibration cal = calibrate_spectral_constant(full, basis, {4.0});
    CHECK_THROWS_AS(build_feedback(4.0, full, basis, cal), validation_error); // needs M >= 4
}

TEST_CASE("closed-loop drift matrices") {
    SUBCASE("zero gain is the uncontrolled diagonal") {
        const EigenBasis basis(kDomainPi, 3);
        const ControlRegion full({{0.0, kPi}}, kDomainPi);
        const SpectralCalibration cal = calibrate_spectral_constant(full, basis, {1.0});
        const FeedbackLaw law = build_feedback(1.0, full, basis, cal).with_gain(0.0);
        const ClosedLoopDrift d = closed_loop_drift(law, 0.0, basis);
        CHECK(d.matrix(0, 0) == doctest::Approx(-1.0));
        CHECK(d.matrix(1, 1) == doctest::Approx(-4.0));
        CHECK(d.matrix(2, 2) == doctest::Approx(-9.0));
        CHECK(d.is_diag);
        const ClosedLoopDrift u = uncontrolled_drift(basis, 0.0);
        for (int i = 0; i < 3; ++i) CHECK(u.matrix(i, i) == d.matrix(i, i));
    }

    SUBCASE("identity Gram decouples the controlled mode") {
        const EigenBasis basis(kDomainPi, 2);
        const ControlRegion full({{0.0, kPi}}, kDomainPi);
        const SpectralCalibration cal = calibrate_spectral_constant(full, basis, {1.0});
        const double g = 7.5;
        const ClosedLoopDrift d =
            closed_loop_drift(build_feedback(1.0, full, basis, cal).with_gain(g), 0.0, basis);
        CHECK(d.matrix(0, 0) == doctest::Approx(-1.0 - g).epsilon(1e-14));
        CHECK(d.matrix(0, 1) == 0.0);
        CHECK(d.matrix(1, 0) == 0.0);
        CHECK(d.matrix(1, 1) == doctest::Approx(-4.0));
    }

    SUBCASE("half-domain coupling enters column one") {
        const EigenBasis basis(kDomainPi, 2);
        const ControlRegion half({{0.0, kHalfPi}}, kDomainPi);
        const SpectralCalibration cal = calibrate_spectral_constant(half, basis, {1.0});
        const ClosedLoopDrift d =
            closed_loop_drift(build_feedback(1.0, half, basis, cal).with_gain(10.0), 0.0, basis);
        CHECK(d.matrix(0, 0) == doctest::Approx(-6.0).epsilon(1e-14));           // -1 - 10*0.5
        CHECK(d.matrix(0, 1) == 0.0);
        CHECK(d.matrix(1, 0) == doctest::Approx(-4.244131815783876).epsilon(1e-13)); // -10*4/(3pi)
        CHECK(d.matrix(1, 1) == doctest::Approx(-4.0));
        CHECK_FALSE(d.is_diag);
    }
}

TEST_CASE("apply_feedback definition and linearity") {
    const EigenBasis basis(kDomainPi, 4);
    const ControlRegion full({{0.0, kPi}}, kDomainPi);
    const SpectralCalibration cal = calibrate_spectral_constant(full, basis, {1.0, 4.0});

    FeedbackLaw law = build_feedback(1.0, full, basis, cal).with_gain(2.0);
    ModeVector u = apply_feedback(law, {3.0, 5.0, 0.0, 0.0});
    CHECK(u == ModeVector{-6.0, 0.0, 0.0, 0.0});
    CHECK(apply_feedback(law, {0.0, 0.0, 0.0, 0.0}) == ModeVector{0.0, 0.0, 0.0, 0.0});

    const FeedbackLaw law4 = build_feedback(4.0, full, basis, cal);
    u = apply_feedback(law4, {1.0, 1.0, 1.0, 1.0});
    CHECK(u[0] == doctest::Approx(-std::exp(2.0) * 4.0));
    CHECK(u[1] == doctest::Approx(-std::exp(2.0) * 4.0));
    CHECK(u[2] == 0.0);
    CHECK(u[3] == 0.0);

    std::mt19937 gen(5);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        ModeVector x(4), y(4);
        for (int i = 0; i < 4; ++i) { x[i] = ud(gen); y[i] = ud(gen); }
        const double al = ud(gen), be = ud(gen);
        ModeVector mix(4);
        for (int i = 0; i < 4; ++i) mix[i] = al * x[i] + be * y[i];
        const ModeVector lhs = apply_feedback(law4, mix);
        const ModeVector fx = apply_feedback(law4, x), fy = apply_feedback(law4, y);
        for (int i = 0; i < 4; ++i)
            CHECK(lhs[i] == doctest::Approx(al * fx[i] + be * fy[i]).epsilon(1e-12));
    }
}

TEST_CASE("feedback enters the first N_lambda columns only") {
    // A + diag(tau_k - c) has rank <= N_lambda: columns past N stay diagonal
    const EigenBasis basis(kDomainPi, 12);
    const ControlRegion half({{0.0, kHalfPi}}, kDomainPi);
    const SpectralCalibration cal = calibrate_half(basis, {9.0});
    const ClosedLoopDrift d = closed_loop_drift(build_feedback(9.0, half, basis, cal), 0.3, basis);
    REQUIRE(d.n_low == 3);
    for (int k = 0; k < 12; ++k)
        for (int j = 3; j < 12; ++j)
            CHECK(d.matrix(k, j) == (k == j ? -basis.eigenvalues[k] + 0.3 : 0.0));
}

TEST_CASE("low-block spectrum sits below -(lambda + tau_1 - c)") {
    const EigenBasis basis(kDomainPi, 12);
    const ControlRegion half({{0.0, kHalfPi}}, kDomainPi);
    for (double lambda : {4.0, 9.0, 16.0}) {
        const SpectralCalibration cal = calibrate_half(basis, {4.0, 9.0, 16.0});
        const FeedbackLaw law = build_feedback(lambda, half, basis, cal);
        for (double c : {0.0, 0.5, -1.0}) {
            const ClosedLoopDrift d = closed_loop_drift(law, c, basis);
            const Vector evs = drift_eigenvalues(d);
            // top-left block: all real parts <= -(gamma C^{-1} e^{-C sqrt(l)} + tau_1 - c)
            Matrix low(law.n_low, law.n_low);
            for (int i = 0; i < law.n_low; ++i)
                for (int j = 0; j < law.n_low; ++j) low(i, j) = d.matrix(i, j);
            const Vector low_evs = jacobi_eigenvalues(low);
            const double bound = -(lambda + basis.eigenvalues.front() - c);
            CHECK(low_evs.back() <= bound + 1e-9);
            // full spectrum strictly negative under the stabilization hypothesis
            if (rate_hypothesis_holds(lambda, basis, 1.0, c))
                CHECK(evs.back() < 0.0);
            CHECK(spectral_radius(d) >= std::abs(evs.front()) - 1e-9);
        }
    }
}

TEST_CASE("rate hypothesis check") {
    const EigenBasis basis(kDomainPi, 4);
    CHECK(rate_hypothesis_holds(9.0, basis, 1.0, 0.0));        // 9 > max{2, 1}
    CHECK_FALSE(rate_hypothesis_holds(2.0, basis, 1.0, 0.0));  // 2 = 2 tau_1 fails
    CHECK_FALSE(rate_hypothesis_holds(3.0, basis, 2.0, 0.0));  // 3 < a^2 = 4
    CHECK(rate_hypothesis_holds(5.0, basis, 2.0, 0.0));
}
