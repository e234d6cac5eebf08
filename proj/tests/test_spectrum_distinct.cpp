#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "casctrl/spectrum_distinct.hpp"

using namespace casctrl;

namespace {

CascadeConfig three_chain() {
    CascadeConfig cfg;
    cfg.N = 3;
    cfg.a = {1.0, 0.3, -0.7};
    cfg.regime = Regime::Distinct;
    cfg.delta = 0.5;
    cfg.measurement = Measurement::distributed(ScalarFn::constant(1.0));
    return cfg;
}

double sup_residual(const ScalarFn& f, int samples = 101) {
    double m = 0.0;
    for (int s = 0; s < samples; ++s)
        m = std::max(m, std::abs(f.eval_raw(double(s) / (samples - 1))));
    return m;
}

} // namespace

TEST_CASE("eigenvalues lambda_{i,k} = a_i - k^2 pi^2") {
    CascadeConfig cfg = three_chain();
    CHECK(distinct::eigenvalue(cfg, 1, 0) == 1.0);
    CHECK(distinct::eigenvalue(cfg, 1, 1) == Catch::Approx(1.0 - kPi * kPi).epsilon(1e-15));
    cfg.a[0] = 0.0;
    CHECK(distinct::eigenvalue(cfg, 1, 2) == Catch::Approx(-4.0 * kPi * kPi).epsilon(1e-15));
}

TEST_CASE("square-root branch selection") {
    auto b = distinct::sqrt_branch(4.0, 0.0);
    CHECK(b.rho == Catch::Approx(2.0));
    CHECK_FALSE(b.trig);
    b = distinct::sqrt_branch(-4.0, 0.0);
    CHECK(b.rho == Catch::Approx(2.0));
    CHECK(b.trig);
    CHECK_THROWS_AS(distinct::sqrt_branch(1e-9, 0.0), ConfigError);

    // pi^2/4 gap: both square-root signs give the same pointwise values
    const double s = kPi * kPi / 4.0;
    const std::complex<double> r = std::sqrt(std::complex<double>(s, 0.0));
    const auto br = distinct::sqrt_branch(s, 0.0);
    const HyperAtom atom(1.0, br.rho, br.trig, HyperKind::CoshLike, HyperArg::OneMinusX);
    for (double x : {0.0, 0.4, 1.0}) {
        CHECK(atom.eval(x) == Catch::Approx(std::cosh(r * (1.0 - x)).real()).margin(1e-13));
        CHECK(atom.eval(x) == Catch::Approx(std::cosh(-r * (1.0 - x)).real()).margin(1e-13));
    }
}

TEST_CASE("phi structure: cosine on the diagonal, zeros above") {
    const CascadeConfig cfg = three_chain();
    for (int k : {0, 1, 3}) {
        const BasisVector phi = distinct::build_phi(cfg, 1, k);
        for (double x : {0.0, 0.5, 1.0})
            CHECK(phi.comp[0].eval_raw(x) ==
                  Catch::Approx(mu_norm(k) * std::cos(k * kPi * x)).margin(1e-14));
        CHECK(phi.comp[1].is_zero());
        CHECK(phi.comp[2].is_zero());
    }
    // psi mirrors: zeros strictly below the chain index
    const BasisVector psi = distinct::build_psi(cfg, 3, 2);
    CHECK(psi.comp[0].is_zero());
    CHECK(psi.comp[1].is_zero());
    CHECK_FALSE(psi.comp[2].is_zero());
}

TEST_CASE("two-chain phi_{2,0} first component matches the closed form") {
    CascadeConfig cfg;
    cfg.N = 2;
    cfg.a = {0.3, 1.0}; // a_2 - a_1 = 0.7 > 0, hyperbolic factor
    cfg.regime = Regime::Distinct;
    cfg.delta = 0.5;
    cfg.measurement = Measurement::distributed(ScalarFn::constant(1.0));
    const BasisVector phi = distinct::build_phi(cfg, 2, 0);
    const double r = std::sqrt(cfg.a[1] - cfg.a[0]); // r^2 = lambda_{2,0} - a_1
    for (double x : {0.0, 0.25, 0.6, 1.0}) {
        const double expected = -std::cosh(r * (1.0 - x)) / (r * std::sinh(r));
        CHECK(phi.comp[0].eval_raw(x) == Catch::Approx(expected).margin(1e-13));
    }
}

TEST_CASE("phi satisfies the operator domain boundary conditions") {
    const CascadeConfig cfg = three_chain();
    for (int i = 1; i <= 3; ++i) {
        for (int k : {0, 1, 2, 5}) {
            const BasisVector phi = distinct::build_phi(cfg, i, k);
            for (int j = 1; j <= 3; ++j) {
                const ScalarFn d = phi.comp[j - 1].derivative();
                CHECK(std::abs(d.eval_raw(1.0)) < 1e-10); // (phi^j)'(1) = 0
                const double coupled = j < 3 ? phi.comp[j].eval_raw(1.0) : 0.0;
                CHECK(std::abs(d.eval_raw(0.0) - coupled) < 1e-10); // (phi^j)'(0) = phi^{j+1}(1)
            }
        }
    }
}

TEST_CASE("psi satisfies the adjoint domain boundary conditions") {
    const CascadeConfig cfg = three_chain();
    for (int i = 1; i <= 3; ++i) {
        for (int k : {0, 1, 4}) {
            const BasisVector psi = distinct::build_psi(cfg, i, k);
            for (int j = 1; j <= 3; ++j) {
                const ScalarFn d = psi.comp[j - 1].derivative();
                CHECK(std::abs(d.eval_raw(0.0)) < 1e-10); // (psi^j)'(0) = 0
                const double coupled = j >= 2 ? -psi.comp[j - 2].eval_raw(0.0) : 0.0;
                CHECK(std::abs(d.eval_raw(1.0) - coupled) < 1e-10); // (psi^j)'(1) = -psi^{j-1}(0)
            }
        }
    }
}

TEST_CASE("componentwise eigen-residuals vanish") {
    const CascadeConfig cfg = three_chain();
    for (int i = 1; i <= 3; ++i) {
        for (int k : {0, 1, 3, 7}) {
            const double lam = distinct::eigenvalue(cfg, i, k);
            const BasisVector phi = distinct::build_phi(cfg, i, k);
            const BasisVector psi = distinct::build_psi(cfg, i, k);
            for (int j = 1; j <= 3; ++j) {
                const ScalarFn rphi = phi.comp[j - 1].derivative().derivative() +
                                      (cfg.a[j - 1] - lam) * phi.comp[j - 1];
                CHECK(sup_residual(rphi) < 1e-9);
                const ScalarFn rpsi = psi.comp[j - 1].derivative().derivative() +
                                      (cfg.a[j - 1] - lam) * psi.comp[j - 1];
                CHECK(sup_residual(rpsi) < 1e-9);
            }
        }
    }
}

TEST_CASE("biorthogonality on a small index range") {
    const CascadeConfig cfg = three_chain();
    const int K = 5;
    std::vector<BasisVector> phis, psis;
    for (int i = 1; i <= 3; ++i)
        for (int k = 0; k <= K; ++k) {
            phis.push_back(distinct::build_phi(cfg, i, k));
            psis.push_back(distinct::build_psi(cfg, i, k));
        }
    double worst = 0.0;
    for (std::size_t r = 0; r < phis.size(); ++r)
        for (std::size_t c = 0; c < psis.size(); ++c) {
            const double target = r == c ? 1.0 : 0.0;
            worst = std::max(worst,
                             std::abs(vector_inner_product(phis[r], psis[c]) - target));
        }
    CHECK(worst < 1e-8);
}

TEST_CASE("single chain frame is exactly orthonormal") {
    CascadeConfig cfg;
    cfg.N = 1;
    cfg.a = {0.5};
    cfg.regime = Regime::Distinct;
    cfg.delta = 0.5;
    cfg.measurement = Measurement::distributed(ScalarFn::constant(1.0));
    const auto rep = distinct::verify_riesz_frame(cfg, 8);
    CHECK(rep.gram_min == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.gram_max == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.biorth_residual < 1e-12);
}

TEST_CASE("frame ratio stays bounded as the range doubles") {
    CascadeConfig cfg;
    cfg.N = 2;
    cfg.a = {1.0, 0.2};
    cfg.regime = Regime::Distinct;
    cfg.delta = 0.5;
    cfg.measurement = Measurement::distributed(ScalarFn::constant(1.0));
    const auto rep1 = distinct::verify_riesz_frame(cfg, 6);
    const auto rep2 = distinct::verify_riesz_frame(cfg, 12);
    CHECK(rep1.gram_min > 0.0);
    CHECK(rep2.gram_min > 0.0);
    CHECK(rep2.frame_ratio() < 2.0 * rep1.frame_ratio() + 1.0);
    CHECK(rep2.biorth_residual < 1e-8);
    CHECK(rep2.gram_min_h1 > 0.0);
}

TEST_CASE("coincident spectra are rejected at validation") {
    CascadeConfig cfg;
    cfg.N = 2;
    cfg.a = {0.5, 0.5};
    cfg.regime = Regime::Distinct;
    cfg.delta = 0.5;
    cfg.measurement = Measurement::distributed(ScalarFn::constant(1.0));
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    // shifted by exactly 3 pi^2: lambda_{2,1} = lambda_{1,2}
    cfg.a = {0.5, 0.5 + 3.0 * kPi * kPi};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
