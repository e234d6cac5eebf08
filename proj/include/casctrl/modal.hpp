#pragma once

// Projection of the boundary input and the measurement onto the (generalized)
// eigenbasis, and assembly of the truncated finite-dimensional model plus the
// residual blocks used by the certificate.
//
// Both regimes are presented through a common "group" interface: the distinct
// regime has N groups of scalar mode blocks (one per chain), the identical
// regime has a single group of N x N blocks M_k. Mode k of group g carries a
// state block of size block_size(), an input pair (alpha, beta), and an output
// row c.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "casctrl/config.hpp"
#include "casctrl/funcalg.hpp"
#include "casctrl/spectrum_distinct.hpp"
#include "casctrl/spectrum_identical.hpp"

namespace casctrl {

// ---------------------------------------------------------------------------
// Lift of the boundary control: y^N is shifted by phi_lift(x) u(t) with
// phi_lift = -(1-x)^2/2, which moves the control into the domain as
// alpha = (0,...,0, phi'' + a_N phi) and beta = (0,...,0, -phi).
// ---------------------------------------------------------------------------

struct LiftProfile {
    ScalarFn phi_lift;
    ScalarFn alpha_fn; // phi'' + a_N phi
    ScalarFn beta_fn;  // -phi

    explicit LiftProfile(double a_N) {
        phi_lift = ScalarFn::polynomial({-0.5, 1.0, -0.5});
        alpha_fn = phi_lift.derivative().derivative() + a_N * phi_lift;
        beta_fn = -1.0 * phi_lift;
        const double at1 = evaluate(phi_lift, 1.0);
        const double d1 = evaluate(phi_lift.derivative(), 1.0);
        const double d0 = evaluate(phi_lift.derivative(), 0.0);
        if (std::abs(at1) > 1e-14 || std::abs(d1) > 1e-14 || std::abs(d0 - 1.0) > 1e-14)
            throw NumericalError("lift profile boundary identities violated");
    }
};

inline double kappa_for(const CascadeConfig& cfg) {
    switch (cfg.measurement.type) {
        case MeasurementType::Distributed: return 0.0;
        case MeasurementType::Dirichlet: return 1.0;
        case MeasurementType::Neumann: return 1.75;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Assembled truncated model.
// ---------------------------------------------------------------------------

struct ModalMatrices {
    // low modes k < n0_g (per group)
    Eigen::MatrixXd A1;
    Eigen::VectorXd B1u, B1v;
    Eigen::RowVectorXd C1;
    Eigen::MatrixXd A1a; // [[A1, B1u],[0, 0]]
    Eigen::VectorXd B1a; // [B1v; 1]
    // middle modes n0_g <= k <= n_g (observer extension)
    Eigen::MatrixXd A2;
    Eigen::VectorXd B2u, B2v;
    Eigen::RowVectorXd C2;     // entries scaled by (k+1)^-kappa
    Eigen::RowVectorXd C2_raw; // unscaled measurement coefficients
    Eigen::VectorXd E2_scale;  // per-state (k+1)^kappa weights

    double kappa = 0.0;
    double feedthrough = 0.0; // d: direct u -> z term, nonzero only for N = 1

    std::vector<int> n0;    // per group
    std::vector<int> n_ext; // per group

    // bookkeeping: (group, k) and state offset per mode block
    struct BlockRef {
        int group;
        int k;
        int offset;
        int size;
    };
    std::vector<BlockRef> x1_blocks;
    std::vector<BlockRef> x2_blocks;

    int dim1() const { return static_cast<int>(A1.rows()); }
    int dim2() const { return static_cast<int>(A2.rows()); }
};

struct HautusReport {
    bool controllable = true;
    bool observable = true;
    std::vector<ModeIndex> uncontrollable_modes;
    std::vector<ModeIndex> unobservable_modes;
    std::vector<std::string> warnings; // near-zero coefficients

    std::string describe() const {
        std::ostringstream os;
        if (controllable && observable) {
            os << "controllable and observable";
        } else {
            for (const auto& m : uncontrollable_modes)
                os << "uncontrollable mode (" << m.chain << "," << m.freq << ") ";
            for (const auto& m : unobservable_modes)
                os << "unobservable mode (" << m.chain << "," << m.freq << ") ";
        }
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// ModalModel: coefficient provider + assembler for the active regime.
// ---------------------------------------------------------------------------

class ModalModel {
public:
    explicit ModalModel(CascadeConfig cfg)
        : cfg_(std::move(cfg)), lift_(cfg_.a.empty() ? 0.0 : cfg_.a.back()) {
        cfg_.validate();
        if (cfg_.regime == Regime::Identical)
            chains_ = std::make_shared<identical::ChainCache>(cfg_.N, cfg_.a.front());
        const int G = groups();
        n0_min_.resize(G);
        for (int g = 0; g < G; ++g) {
            int k = 0;
            while (!(lambda_of(g, k) < -cfg_.delta)) ++k;
            n0_min_[g] = k;
        }
        n0_ = n0_min_;
        if (cfg_.N == 1) feedthrough_ = compute_feedthrough();
    }

    const CascadeConfig& config() const { return cfg_; }
    const LiftProfile& lift() const { return lift_; }
    double kappa() const { return kappa_for(cfg_); }

    int groups() const { return cfg_.regime == Regime::Distinct ? cfg_.N : 1; }
    int block_size() const { return cfg_.regime == Regime::Distinct ? 1 : cfg_.N; }

    double lambda_of(int g, int k) const {
        return cfg_.regime == Regime::Distinct ? cfg_.lambda(g + 1, k)
                                               : cfg_.a.front() - double(k) * k * kPi * kPi;
    }

    /// Minimal admissible truncation orders (lambda(g, n0) < -delta).
    const std::vector<int>& minimal_orders() const { return n0_min_; }

    /// Active truncation orders (modes 0..n0-1 are captured).
    const std::vector<int>& orders() const { return n0_; }

    /// Raise truncation orders; rejects values that would leave an
    /// insufficiently damped mode outside the captured range.
    void set_orders(const std::vector<int>& n0) {
        if (static_cast<int>(n0.size()) != groups())
            throw ConfigError("order list size mismatch");
        for (int g = 0; g < groups(); ++g) {
            if (n0[g] < n0_min_[g]) {
                std::ostringstream os;
                os << "truncation order " << n0[g] << " for chain " << g + 1
                   << " violates lambda(n0) < -delta; minimal admissible order is "
                   << n0_min_[g];
                throw ConfigError(os.str());
            }
        }
        n0_ = n0;
    }

    Eigen::MatrixXd mode_block(int g, int k) const {
        if (cfg_.regime == Regime::Distinct) {
            Eigen::MatrixXd m(1, 1);
            m(0, 0) = lambda_of(g, k);
            return m;
        }
        return chains_->get(k).block.M;
    }

    const Eigen::VectorXd& alpha_block(int g, int k) const { return coeffs(g, k).alpha; }
    const Eigen::VectorXd& beta_block(int g, int k) const { return coeffs(g, k).beta; }
    const Eigen::RowVectorXd& c_block(int g, int k) const { return coeffs(g, k).c; }

    /// Boundary-trace control coefficient (fast path): m_{i,k} = -psi^N(0) in
    /// the distinct regime, the full N_k = -mu_k [c^N ... 1]^T block otherwise.
    Eigen::VectorXd control_coefficient(int g, int k) const {
        if (cfg_.regime == Regime::Distinct) {
            Eigen::VectorXd m(1);
            m(0) = boundary_trace_m(g + 1, k);
            return m;
        }
        return chains_->get(k).block.Nvec;
    }

    /// Scalar whose non-vanishing decides controllability of mode (g,k).
    double ctrl_scalar(int g, int k) const {
        const Eigen::VectorXd m = control_coefficient(g, k);
        return m(m.size() - 1);
    }

    /// Scalar whose non-vanishing decides observability of mode (g,k).
    double obs_scalar(int g, int k) const { return coeffs(g, k).c(0); }

    double feedthrough() const { return feedthrough_; }

    const identical::ChainBundle& chain_bundle(int k) const {
        if (cfg_.regime != Regime::Identical)
            throw std::logic_error("chain_bundle: identical regime only");
        return chains_->get(k);
    }

    BasisVector phi(int g, int k) const {
        if (cfg_.regime == Regime::Distinct) return distinct::build_phi(cfg_, g + 1, k);
        // group index is unused in the identical regime; callers pass rank via g+1
        return identical::build_generalized_phi(k, g + 1, chains_->get(k).sigma, cfg_.N);
    }

    BasisVector psi(int g, int k) const {
        if (cfg_.regime == Regime::Distinct) return distinct::build_psi(cfg_, g + 1, k);
        return identical::build_generalized_psi(k, g + 1, chains_->get(k).tau, cfg_.N);
    }

    HautusReport hautus_check() const {
        HautusReport rep;
        for (int g = 0; g < groups(); ++g) {
            double ctrl_scale = 0.0, obs_scale = 0.0;
            for (int k = 0; k < n0_[g]; ++k) {
                ctrl_scale = std::max(ctrl_scale, std::abs(ctrl_scalar(g, k)));
                obs_scale = std::max(obs_scale, std::abs(obs_scalar(g, k)));
            }
            for (int k = 0; k < n0_[g]; ++k) {
                const double m = ctrl_scalar(g, k);
                const double c = obs_scalar(g, k);
                const double ctrl_cliff = 1e-9 * (1.0 + ctrl_scale);
                const double obs_cliff = 1e-9 * (1.0 + obs_scale);
                const ModeIndex mode{mode_chain_index(g), k};
                if (std::abs(m) <= ctrl_cliff) {
                    rep.controllable = false;
                    rep.uncontrollable_modes.push_back(mode);
                } else if (std::abs(m) <= 1e3 * ctrl_cliff) {
                    rep.warnings.push_back("near-zero control coefficient at mode (" +
                                           std::to_string(mode.chain) + "," + std::to_string(k) +
                                           "): " + std::to_string(m));
                }
                if (std::abs(c) <= obs_cliff) {
                    rep.observable = false;
                    rep.unobservable_modes.push_back(mode);
                } else if (std::abs(c) <= 1e3 * obs_cliff) {
                    rep.warnings.push_back("near-zero output coefficient at mode (" +
                                           std::to_string(mode.chain) + "," + std::to_string(k) +
                                           "): " + std::to_string(c));
                }
            }
        }
        return rep;
    }

    /// Assembles the truncated matrices for observer extension orders n_ext
    /// (middle modes n0_g <= k <= n_ext_g).
    ModalMatrices assemble(const std::vector<int>& n_ext) const {
        if (static_cast<int>(n_ext.size()) != groups())
            throw ConfigError("extension order list size mismatch");
        for (int g = 0; g < groups(); ++g)
            if (n_ext[g] < n0_[g]) throw ConfigError("extension order below truncation order");

        ModalMatrices mm;
        mm.kappa = kappa();
        mm.feedthrough = feedthrough_;
        mm.n0 = n0_;
        mm.n_ext = n_ext;
        const int bs = block_size();

        int dim1 = 0, dim2 = 0;
        for (int g = 0; g < groups(); ++g) {
            dim1 += n0_[g] * bs;
            dim2 += (n_ext[g] - n0_[g] + 1) * bs;
        }
        mm.A1 = Eigen::MatrixXd::Zero(dim1, dim1);
        mm.B1u = Eigen::VectorXd::Zero(dim1);
        mm.B1v = Eigen::VectorXd::Zero(dim1);
        mm.C1 = Eigen::RowVectorXd::Zero(dim1);
        mm.A2 = Eigen::MatrixXd::Zero(dim2, dim2);
        mm.B2u = Eigen::VectorXd::Zero(dim2);
        mm.B2v = Eigen::VectorXd::Zero(dim2);
        mm.C2 = Eigen::RowVectorXd::Zero(dim2);
        mm.C2_raw = Eigen::RowVectorXd::Zero(dim2);
        mm.E2_scale = Eigen::VectorXd::Zero(dim2);

        int off1 = 0, off2 = 0;
        for (int g = 0; g < groups(); ++g) {
            for (int k = 0; k < n0_[g]; ++k) {
                mm.x1_blocks.push_back({g, k, off1, bs});
                mm.A1.block(off1, off1, bs, bs) = mode_block(g, k);
                mm.B1u.segment(off1, bs) = alpha_block(g, k);
                mm.B1v.segment(off1, bs) = beta_block(g, k);
                mm.C1.segment(off1, bs) = c_block(g, k);
                off1 += bs;
            }
            for (int k = n0_[g]; k <= n_ext[g]; ++k) {
                mm.x2_blocks.push_back({g, k, off2, bs});
                mm.A2.block(off2, off2, bs, bs) = mode_block(g, k);
                mm.B2u.segment(off2, bs) = alpha_block(g, k);
                mm.B2v.segment(off2, bs) = beta_block(g, k);
                const double scale = std::pow(double(k) + 1.0, mm.kappa);
                mm.C2_raw.segment(off2, bs) = c_block(g, k);
                mm.C2.segment(off2, bs) = c_block(g, k) / scale;
                mm.E2_scale.segment(off2, bs).setConstant(scale);
                off2 += bs;
            }
        }

        mm.A1a = Eigen::MatrixXd::Zero(dim1 + 1, dim1 + 1);
        mm.A1a.topLeftCorner(dim1, dim1) = mm.A1;
        mm.A1a.topRightCorner(dim1, 1) = mm.B1u;
        mm.B1a = Eigen::VectorXd::Zero(dim1 + 1);
        mm.B1a.head(dim1) = mm.B1v;
        mm.B1a(dim1) = 1.0;
        return mm;
    }

private:
    struct ModeCoeffs {
        Eigen::VectorXd alpha, beta;
        Eigen::RowVectorXd c;
    };

    int mode_chain_index(int g) const { return cfg_.regime == Regime::Distinct ? g + 1 : 1; }

    double compute_feedthrough() const {
        switch (cfg_.measurement.type) {
            case MeasurementType::Distributed:
                return inner_product(cfg_.measurement.weight, lift_.phi_lift);
            case MeasurementType::Dirichlet:
                return evaluate(lift_.phi_lift, cfg_.measurement.xi);
            case MeasurementType::Neumann:
                return evaluate(lift_.phi_lift.derivative(), cfg_.measurement.xi);
        }
        return 0.0;
    }

    double boundary_trace_m(int i, int k) const {
        // m_{i,k} = -psi_{i,k}^N(0)
        const double lam = cfg_.lambda(i, k);
        const double mu = mu_norm(k);
        if (i == cfg_.N) return -mu;
        double denom = 1.0;
        for (int j = i + 1; j <= cfg_.N; ++j) denom *= r_sinh_r(lam - cfg_.a[j - 1]);
        const double sign = ((cfg_.N - i) % 2 == 0) ? 1.0 : -1.0;
        return -sign * mu / denom;
    }

    double output_coefficient(const ScalarFn& phi1) const {
        switch (cfg_.measurement.type) {
            case MeasurementType::Distributed:
                return inner_product(cfg_.measurement.weight, phi1);
            case MeasurementType::Dirichlet:
                return evaluate(phi1, cfg_.measurement.xi);
            case MeasurementType::Neumann:
                return evaluate(phi1.derivative(), cfg_.measurement.xi);
        }
        return 0.0;
    }

    const ModeCoeffs& coeffs(int g, int k) const {
        const long key = static_cast<long>(g) * (1L << 32) + k;
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            auto it = cache_->table.find(key);
            if (it != cache_->table.end()) return *it->second;
        }
        auto mc = std::make_shared<ModeCoeffs>();
        const int bs = block_size();
        mc->alpha.resize(bs);
        mc->beta.resize(bs);
        mc->c.resize(bs);
        if (cfg_.regime == Regime::Distinct) {
            const BasisVector psi_v = distinct::build_psi(cfg_, g + 1, k);
            const ScalarFn& psiN = psi_v.comp[cfg_.N - 1];
            mc->alpha(0) = inner_product(lift_.alpha_fn, psiN);
            mc->beta(0) = inner_product(lift_.beta_fn, psiN);
            const BasisVector phi_v = distinct::build_phi(cfg_, g + 1, k);
            mc->c(0) = output_coefficient(phi_v.comp[0]);
        } else {
            const auto& bundle = chains_->get(k);
            for (int i = 1; i <= cfg_.N; ++i) {
                const ScalarFn& psiN = bundle.tau.fn(cfg_.N - i + 1);
                mc->alpha(i - 1) = inner_product(lift_.alpha_fn, psiN);
                mc->beta(i - 1) = inner_product(lift_.beta_fn, psiN);
                mc->c(i - 1) = output_coefficient(bundle.sigma.fn(i)); // phi_{i,k}^1 = sigma^i
            }
            // projection route must reproduce the boundary-trace N_k; a
            // mismatch signals a recursion bug in the chains
            const Eigen::VectorXd cross = mc->alpha + bundle.block.M * mc->beta;
            if ((cross - bundle.block.Nvec).cwiseAbs().maxCoeff() > 1e-8)
                throw NumericalError("mode block cross-check failed at k = " + std::to_string(k));
        }
        std::lock_guard<std::mutex> lock(cache_->mutex);
        auto [it, inserted] = cache_->table.try_emplace(key, std::move(mc));
        return *it->second;
    }

    CascadeConfig cfg_;
    LiftProfile lift_;
    std::shared_ptr<identical::ChainCache> chains_;
    std::vector<int> n0_min_;
    std::vector<int> n0_;
    double feedthrough_ = 0.0;

    // shared across copies; entries are value-identical, insert-or-get
    struct CoeffCache {
        std::mutex mutex;
        std::map<long, std::shared_ptr<ModeCoeffs>> table;
    };
    std::shared_ptr<CoeffCache> cache_ = std::make_shared<CoeffCache>();
};

} // namespace casctrl
