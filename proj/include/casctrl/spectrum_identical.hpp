#pragma once

// Generalized eigenstructure for N identical equations: eigenvalue
// lambda_k = a - k^2 pi^2 with algebraic multiplicity N. The Jordan-type
// chains sigma_k^1..sigma_k^N and their duals tau_k^1..tau_k^N are built by
// second-order ODE recursions executed exactly on PolyTrig coefficients; the
// coupling constants nu_k^n and the biorthogonality constants c_k^n come out
// of the same recursion. Per-frequency data is memoized.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "casctrl/config.hpp"
#include "casctrl/funcalg.hpp"

namespace casctrl::identical {

struct SigmaChain {
    int k = 0;
    std::vector<ScalarFn> sigma; // sigma_k^1 .. sigma_k^N
    std::vector<double> nu;      // nu_k^1 .. nu_k^{N-1}

    const ScalarFn& fn(int n) const { return sigma.at(static_cast<std::size_t>(n) - 1); } // 1-based
    double nu_at(int n) const { return nu.at(static_cast<std::size_t>(n) - 1); }
};

struct TauChain {
    int k = 0;
    std::vector<ScalarFn> tau;    // tau_k^1 .. tau_k^N
    std::vector<double> nu_tilde; // recursion constants; equal to nu by duality
    std::vector<double> c;        // biorthogonality constants c_k^1(=1) .. c_k^N

    const ScalarFn& fn(int n) const { return tau.at(static_cast<std::size_t>(n) - 1); }
    double c_at(int n) const { return c.at(static_cast<std::size_t>(n) - 1); }
};

namespace detail {

inline double cos_weight_integral(int k, const ScalarFn& f) {
    // int_0^1 cos(k pi s) f(s) ds, closed form (f is PolyTrig).
    return inner_product_closed_form(ScalarFn::cosine(1.0, k), f);
}

} // namespace detail

/// sigma_k^1 = mu_k cos(k pi x); for n >= 2 the recursion fixes nu_k^{n-1}
/// from the boundary law (sigma_k^n)'(0) = sigma_k^{n-1}(1) and solves
/// (sigma_k^n)'' + k^2 pi^2 sigma_k^n = sum_i nu_k^i sigma_k^{n-i}.
inline SigmaChain build_sigma_chain(int k, int N) {
    SigmaChain chain;
    chain.k = k;
    chain.sigma.reserve(N);
    chain.sigma.push_back(k == 0 ? ScalarFn::constant(1.0) : ScalarFn::cosine(std::numbers::sqrt2, k));
    for (int n = 2; n <= N; ++n) {
        const double boundary = evaluate(chain.sigma[n - 2], 1.0); // sigma^{n-1}(1)
        double nu_new;
        if (k == 0) {
            double acc = boundary;
            for (int i = 1; i <= n - 2; ++i)
                acc += chain.nu[i - 1] * integral01(chain.sigma[n - i - 1]);
            nu_new = -acc;
        } else {
            double acc = boundary;
            for (int i = 1; i <= n - 2; ++i)
                acc += chain.nu[i - 1] * detail::cos_weight_integral(k, chain.sigma[n - i - 1]);
            nu_new = -std::numbers::sqrt2 * acc;
        }
        chain.nu.push_back(nu_new);

        ScalarFn rhs;
        for (int i = 1; i <= n - 1; ++i) rhs += chain.nu[i - 1] * chain.sigma[n - i - 1];
        ScalarFn next = particular_zero_ic(rhs, k);
        if (k == 0) {
            next += ScalarFn::polynomial({0.0, boundary}); // + sigma^{n-1}(1) x
        } else {
            next += ScalarFn::sine(boundary / (k * kPi), k);
        }
        chain.sigma.push_back(std::move(next));
    }
    return chain;
}

/// Dual chain: (tau_k^n)'(0) = 0, (tau_k^n)'(1) = -tau_k^{n-1}(0); the free
/// cosine amplitude c_k^n is fixed so that the block biorthogonality sums
/// sum_i int sigma^{n-i+1} tau^i vanish.
inline TauChain build_tau_chain(int k, int N, const SigmaChain& sigma) {
    if (sigma.k != k) throw std::invalid_argument("build_tau_chain: sigma chain frequency mismatch");
    TauChain chain;
    chain.k = k;
    chain.tau.reserve(N);
    chain.tau.push_back(k == 0 ? ScalarFn::constant(1.0) : ScalarFn::cosine(std::numbers::sqrt2, k));
    chain.c.push_back(1.0);
    for (int n = 2; n <= N; ++n) {
        const double at_zero = evaluate(chain.tau[n - 2], 0.0); // tau^{n-1}(0)
        double nu_new;
        if (k == 0) {
            double acc = at_zero;
            for (int i = 1; i <= n - 2; ++i)
                acc += chain.nu_tilde[i - 1] * integral01(chain.tau[n - i - 1]);
            nu_new = -acc;
        } else {
            const double parity = (k % 2 == 0) ? 1.0 : -1.0;
            double acc = parity * at_zero;
            for (int i = 1; i <= n - 2; ++i)
                acc += chain.nu_tilde[i - 1] * detail::cos_weight_integral(k, chain.tau[n - i - 1]);
            nu_new = -std::numbers::sqrt2 * acc;
        }
        chain.nu_tilde.push_back(nu_new);

        ScalarFn rhs;
        for (int i = 1; i <= n - 1; ++i) rhs += chain.nu_tilde[i - 1] * chain.tau[n - i - 1];
        ScalarFn tau0 = particular_zero_ic(rhs, k); // zero-IC part tau_{k,0}^n

        double c_new = -inner_product_closed_form(sigma.fn(1), tau0);
        for (int i = 1; i <= n - 1; ++i)
            c_new -= inner_product_closed_form(sigma.fn(n - i + 1), chain.tau[i - 1]);
        chain.c.push_back(c_new);

        ScalarFn next = std::move(tau0);
        next += k == 0 ? ScalarFn::constant(c_new) : ScalarFn::cosine(c_new * std::numbers::sqrt2, k);
        chain.tau.push_back(std::move(next));
    }
    return chain;
}

/// phi_{i,k} = (sigma_k^i, sigma_k^{i-1}, ..., sigma_k^1, 0, ..., 0).
inline BasisVector build_generalized_phi(int k, int i, const SigmaChain& sigma, int N) {
    BasisVector out;
    out.mode = {i, k};
    out.kind = BasisKind::Phi;
    out.comp.assign(N, ScalarFn::zero());
    for (int j = 1; j <= i; ++j) out.comp[j - 1] = sigma.fn(i - j + 1);
    return out;
}

/// psi_{i,k} = (0, ..., 0, tau_k^1, tau_k^2, ..., tau_k^{N-i+1}).
inline BasisVector build_generalized_psi(int k, int i, const TauChain& tau, int N) {
    BasisVector out;
    out.mode = {i, k};
    out.kind = BasisKind::Psi;
    out.comp.assign(N, ScalarFn::zero());
    for (int j = i; j <= N; ++j) out.comp[j - 1] = tau.fn(j - i + 1);
    return out;
}

// ---------------------------------------------------------------------------
// ModeBlock: the restriction of the operator to the lambda_k eigenspace in
// the basis (phi_{1,k}, ..., phi_{N,k}), plus the control injection N_k.
// ---------------------------------------------------------------------------

struct ModeBlock {
    int k = 0;
    double lambda = 0.0;
    Eigen::MatrixXd M; // upper-triangular Toeplitz, lambda_k on the diagonal
    Eigen::VectorXd Nvec; // N_k = -mu_k [c^N ... c^2 1]^T
};

inline ModeBlock build_mode_block(int k, int N, double a, const SigmaChain& sigma,
                                  const TauChain& tau) {
    ModeBlock blk;
    blk.k = k;
    blk.lambda = a - double(k) * k * kPi * kPi;
    blk.M = Eigen::MatrixXd::Zero(N, N);
    for (int r = 0; r < N; ++r) {
        blk.M(r, r) = blk.lambda;
        for (int c = r + 1; c < N; ++c) blk.M(r, c) = sigma.nu_at(c - r);
    }
    blk.Nvec = Eigen::VectorXd::Zero(N);
    const double mu = mu_norm(k);
    for (int i = 1; i <= N; ++i) blk.Nvec(i - 1) = -mu * tau.c_at(N - i + 1);
    return blk;
}

// ---------------------------------------------------------------------------
// Memoized per-frequency bundle.
// ---------------------------------------------------------------------------

struct ChainBundle {
    SigmaChain sigma;
    TauChain tau;
    ModeBlock block;
};

class ChainCache {
public:
    ChainCache(int N, double a) : N_(N), a_(a) {}

    const ChainBundle& get(int k) const {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = table_.find(k);
            if (it != table_.end()) return *it->second;
        }
        auto bundle = std::make_shared<ChainBundle>();
        bundle->sigma = build_sigma_chain(k, N_);
        bundle->tau = build_tau_chain(k, N_, bundle->sigma);
        bundle->block = build_mode_block(k, N_, a_, bundle->sigma, bundle->tau);
        std::lock_guard<std::mutex> lock(mutex_);
        auto [it, inserted] = table_.try_emplace(k, std::move(bundle));
        return *it->second;
    }

    int N() const { return N_; }
    double a() const { return a_; }

private:
    int N_;
    double a_;
    mutable std::mutex mutex_;
    mutable std::map<int, std::shared_ptr<ChainBundle>> table_;
};

// ---------------------------------------------------------------------------
// Asymptotic decay diagnostics: sup norms of sigma_k^n / tau_k^n and |nu_k^n|
// tabulated over k with fitted log-log slopes.
// ---------------------------------------------------------------------------

struct DecayRow {
    int n = 0;
    double slope_sigma = 0.0; // d log ||sigma_k^n||_inf / d log k
    double slope_tau = 0.0;
    double slope_nu = 0.0;
    double max_sigma = 0.0; // max over the k range (boundedness check for n = 1)
};

inline double sup_norm_on_grid(const ScalarFn& f, int samples = 501) {
    double m = 0.0;
    for (int s = 0; s < samples; ++s)
        m = std::max(m, std::abs(f.eval_raw(double(s) / (samples - 1))));
    return m;
}

inline double loglog_slope(const std::vector<double>& ks, const std::vector<double>& vals) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t idx = 0; idx < ks.size(); ++idx) {
        if (vals[idx] <= 0.0) continue;
        const double lx = std::log(ks[idx]), ly = std::log(vals[idx]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::vector<DecayRow> asymptotic_report(int k_lo, int k_hi, int N) {
    std::vector<DecayRow> rows;
    std::vector<double> ks;
    std::vector<SigmaChain> sigmas;
    std::vector<TauChain> taus;
    for (int k = k_lo; k <= k_hi; ++k) {
        ks.push_back(k);
        sigmas.push_back(build_sigma_chain(k, N));
        taus.push_back(build_tau_chain(k, N, sigmas.back()));
    }
    for (int n = 1; n <= N; ++n) {
        DecayRow row;
        row.n = n;
        std::vector<double> vs, vt, vn;
        for (std::size_t idx = 0; idx < ks.size(); ++idx) {
            vs.push_back(sup_norm_on_grid(sigmas[idx].fn(n)));
            vt.push_back(sup_norm_on_grid(taus[idx].fn(n)));
            if (n <= N - 1) vn.push_back(std::abs(sigmas[idx].nu_at(n)));
            row.max_sigma = std::max(row.max_sigma, vs.back());
        }
        row.slope_sigma = loglog_slope(ks, vs);
        row.slope_tau = loglog_slope(ks, vt);
        row.slope_nu = (n <= N - 1) ? loglog_slope(ks, vn) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

} // namespace casctrl::identical
