#pragma once

// Eigenstructure of the cascade operator in the pairwise-disjoint-spectra
// regime. Eigenvalues lambda_{i,k} = a_i - k^2 pi^2; eigenvectors phi_{i,k}
// carry the cosine mode on component i and cascaded cosh(r(1-x)) factors
// below it; adjoint eigenvectors psi_{i,k} mirror the structure upward with
// cosh(r x). The two families are biorthogonal.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "casctrl/config.hpp"
#include "casctrl/funcalg.hpp"

namespace casctrl::distinct {

struct SqrtBranch {
    double rho = 0.0; // principal nonnegative root of |lambda - a_j|
    bool trig = false; // lambda - a_j < 0: cosh(r t) means cos(rho t)
};

/// Principal square-root branch of lambda - a_j. The represented eigenvector
/// values are invariant under the sign choice (cosh is even, r sinh r is even).
inline SqrtBranch sqrt_branch(double lambda, double a_j) {
    const double s = lambda - a_j;
    if (std::abs(s) < kSpectralGapTol)
        throw ConfigError("spectra not disjoint: |lambda - a_j| = " + std::to_string(std::abs(s)));
    SqrtBranch b;
    b.rho = std::sqrt(std::abs(s));
    b.trig = s < 0.0;
    if (!b.trig && b.rho > kMaxHyperbolicRho)
        throw ConfigError("hyperbolic factor rho too large");
    return b;
}

inline double eigenvalue(const CascadeConfig& cfg, int i, int k) {
    return cfg.lambda(i, k);
}

/// phi_{i,k}: component i is mu_k cos(k pi x); components j < i carry
/// (-1)^{k+i-j} mu_k / prod_{j'=j}^{i-1} r sinh(r) * cosh(r_j (1-x)); zero above i.
inline BasisVector build_phi(const CascadeConfig& cfg, int i, int k) {
    BasisVector out;
    out.mode = {i, k};
    out.kind = BasisKind::Phi;
    out.comp.assign(cfg.N, ScalarFn::zero());
    const double lam = cfg.lambda(i, k);
    const double mu = mu_norm(k);
    out.comp[i - 1] = ScalarFn::cosine(mu, k);

    double denom = 1.0; // prod_{j'=j}^{i-1} r sinh(r), accumulated downward
    for (int j = i - 1; j >= 1; --j) {
        denom *= r_sinh_r(lam - cfg.a[j - 1]);
        const auto br = sqrt_branch(lam, cfg.a[j - 1]);
        const double sign = ((k + i - j) % 2 == 0) ? 1.0 : -1.0;
        out.comp[j - 1] = ScalarFn::hyper(HyperAtom(
            sign * mu / denom, br.rho, br.trig, HyperKind::CoshLike, HyperArg::OneMinusX));
    }
    return out;
}

/// psi_{i,k}: component i is mu_k cos(k pi x); components j > i carry
/// (-1)^{j-i} mu_k / prod_{j'=i+1}^{j} r sinh(r) * cosh(r_j x); zero below i.
inline BasisVector build_psi(const CascadeConfig& cfg, int i, int k) {
    BasisVector out;
    out.mode = {i, k};
    out.kind = BasisKind::Psi;
    out.comp.assign(cfg.N, ScalarFn::zero());
    const double lam = cfg.lambda(i, k);
    const double mu = mu_norm(k);
    out.comp[i - 1] = ScalarFn::cosine(mu, k);

    double denom = 1.0;
    for (int j = i + 1; j <= cfg.N; ++j) {
        denom *= r_sinh_r(lam - cfg.a[j - 1]);
        const auto br = sqrt_branch(lam, cfg.a[j - 1]);
        const double sign = ((j - i) % 2 == 0) ? 1.0 : -1.0;
        out.comp[j - 1] = ScalarFn::hyper(
            HyperAtom(sign * mu / denom, br.rho, br.trig, HyperKind::CoshLike, HyperArg::X));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Riesz-frame diagnostics: Gram spectra and biorthogonality residuals for the
// truncated families, in H^0 and for the 1/sqrt(1+k^2 pi^2)-scaled family in H^1.
// ---------------------------------------------------------------------------

struct FrameReport {
    int K_max = 0;
    double gram_min = 0.0;       // smallest Gram eigenvalue (H^0 phi family)
    double gram_max = 0.0;
    double gram_min_h1 = 0.0;    // scaled family under the H^1 inner product
    double gram_max_h1 = 0.0;
    double biorth_residual = 0.0; // max |<phi, psi> - delta|

    double frame_ratio() const { return gram_max / gram_min; }
};

inline FrameReport verify_riesz_frame(const CascadeConfig& cfg, int K_max) {
    std::vector<BasisVector> phis, psis;
    for (int i = 1; i <= cfg.N; ++i) {
        for (int k = 0; k <= K_max; ++k) {
            phis.push_back(build_phi(cfg, i, k));
            psis.push_back(build_psi(cfg, i, k));
        }
    }
    const int n = static_cast<int>(phis.size());
    Eigen::MatrixXd gram(n, n), gram_h1(n, n);
    FrameReport rep;
    rep.K_max = K_max;
    for (int r = 0; r < n; ++r) {
        const double sr = 1.0 / std::sqrt(1.0 + double(phis[r].mode.freq) * phis[r].mode.freq * kPi * kPi);
        for (int c = r; c < n; ++c) {
            const double g = vector_inner_product(phis[r], phis[c]);
            gram(r, c) = gram(c, r) = g;
            const double sc =
                1.0 / std::sqrt(1.0 + double(phis[c].mode.freq) * phis[c].mode.freq * kPi * kPi);
            const double g1 = sr * sc * h1_inner_product(phis[r], phis[c]);
            gram_h1(r, c) = gram_h1(c, r) = g1;
        }
        for (int c = 0; c < n; ++c) {
            const double target = (r == c) ? 1.0 : 0.0;
            rep.biorth_residual = std::max(
                rep.biorth_residual, std::abs(vector_inner_product(phis[r], psis[c]) - target));
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    rep.gram_min = es.eigenvalues().minCoeff();
    rep.gram_max = es.eigenvalues().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(gram_h1, Eigen::EigenvaluesOnly);
    rep.gram_min_h1 = es1.eigenvalues().minCoeff();
    rep.gram_max_h1 = es1.eigenvalues().maxCoeff();
    return rep;
}

} // namespace casctrl::distinct
