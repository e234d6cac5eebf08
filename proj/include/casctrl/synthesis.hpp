#pragma once

// Gain design and the truncation-order certificate. Gains are placed by
// Ackermann's formula on the single-input (resp. single-output) truncated
// pair; the certificate evaluates the closed-loop Lyapunov inequality blocks
// Theta_1 and the per-mode margins Gamma, with coefficient tail sums computed
// to a cutoff plus an analytic remainder bound.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "casctrl/config.hpp"
#include "casctrl/modal.hpp"

namespace casctrl {

inline std::string format_scientific(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Spectral abscissa and single-input pole placement.
// ---------------------------------------------------------------------------

inline double spectral_abscissa(const Eigen::MatrixXd& A) {
    if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    return es.eigenvalues().real().maxCoeff();
}

/// Ackermann placement for a single-input pair: K such that A - B K has the
/// requested characteristic polynomial roots.
inline Eigen::RowVectorXd place_single_input(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                                             const std::vector<double>& poles) {
    const int n = static_cast<int>(A.rows());
    if (n == 0) return Eigen::RowVectorXd(0);
    if (static_cast<int>(poles.size()) != n)
        throw std::invalid_argument("place_single_input: pole count mismatch");

    Eigen::MatrixXd ctrb(n, n);
    Eigen::VectorXd col = B;
    for (int j = 0; j < n; ++j) {
        ctrb.col(j) = col;
        col = A * col;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ctrb, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > 1e12)
        throw SynthesisError(
            "controllability matrix condition number exceeds 1e12; reduce the truncation "
            "order or increase the spectral gaps");

    Eigen::MatrixXd qA = Eigen::MatrixXd::Identity(n, n);
    for (double p : poles) qA = qA * (A - p * Eigen::MatrixXd::Identity(n, n));

    Eigen::RowVectorXd en = Eigen::RowVectorXd::Zero(n);
    en(n - 1) = 1.0;
    return en * ctrb.colPivHouseholderQr().solve(qA);
}

// Partial placement targets: eigenvalues already left of -delta - offset are
// kept in place (moving deep heat modes needs violent gains and wrecks the
// conditioning of the closed loop); the rest walk down a well-separated real
// ladder. The observer ladder is offset from the state ladder so the
// closed-loop blocks share no shallow eigenvalues.
inline std::vector<double> placement_targets(const Eigen::MatrixXd& A, double delta,
                                             double offset, double gap) {
    const int n = static_cast<int>(A.rows());
    std::vector<double> open_loop(n);
    {
        Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
        for (int j = 0; j < n; ++j) open_loop[j] = es.eigenvalues()(j).real();
        std::sort(open_loop.begin(), open_loop.end(), std::greater<>());
    }
    std::vector<double> targets;
    targets.reserve(n);
    double ladder = -delta - offset;
    for (double lam : open_loop) {
        double t;
        if (lam < -delta - offset) {
            t = lam; // deep enough, keep
        } else {
            t = ladder;
            ladder -= gap;
        }
        // keep targets pairwise separated (repeated deep pairs are fine, but
        // a ladder spot must not collide with a kept eigenvalue)
        for (std::size_t q = 0; q < targets.size(); ++q)
            if (lam >= -delta - offset && std::abs(t - targets[q]) < 1e-3) t -= 0.101 * gap;
        targets.push_back(t);
    }
    return targets;
}

/// State gain for the augmented pair (A_{1,a}, B_{1,a}); the achieved
/// closed-loop abscissa is re-verified by an eigenvalue solve.
inline Eigen::RowVectorXd design_state_gain(const Eigen::MatrixXd& A1a, const Eigen::VectorXd& B1a,
                                            double delta) {
    Eigen::RowVectorXd K = place_single_input(A1a, B1a, placement_targets(A1a, delta, 0.5, 0.5));
    const double abscissa = spectral_abscissa(A1a - B1a * K);
    if (!(abscissa < -delta - 0.25))
        throw SynthesisError("state gain placement failed: achieved abscissa " +
                             std::to_string(abscissa));
    return K;
}

/// Observer gain for (A1, C1), designed on the dual pair.
inline Eigen::VectorXd design_observer_gain(const Eigen::MatrixXd& A1,
                                            const Eigen::RowVectorXd& C1, double delta) {
    const int n = static_cast<int>(A1.rows());
    if (n == 0) return Eigen::VectorXd(0);
    Eigen::RowVectorXd Lt =
        place_single_input(A1.transpose(), C1.transpose(), placement_targets(A1, delta, 0.75, 0.5));
    Eigen::VectorXd L = Lt.transpose();
    const double abscissa = spectral_abscissa(A1 - L * C1);
    if (!(abscissa < -delta - 0.25))
        throw SynthesisError("observer gain placement failed: achieved abscissa " +
                             std::to_string(abscissa));
    return L;
}

// ---------------------------------------------------------------------------
// Lyapunov solve F^T P + P F + 2 delta P = -Q via Bartels-Stewart on the real
// Schur form of F + delta I.
// ---------------------------------------------------------------------------

namespace detail {

// Solves T^T Y + Y T = -C for quasi-upper-triangular T (real Schur form),
// by forward substitution over the 1x1/2x2 diagonal blocks.
inline Eigen::MatrixXd schur_lyapunov(const Eigen::MatrixXd& T, const Eigen::MatrixXd& C) {
    const int n = static_cast<int>(T.rows());
    std::vector<int> starts;
    for (int i = 0; i < n;) {
        starts.push_back(i);
        i += (i + 1 < n && T(i + 1, i) != 0.0) ? 2 : 1;
    }
    const int m = static_cast<int>(starts.size());
    auto size_of = [&](int b) {
        return (b + 1 < m ? starts[b + 1] : n) - starts[b];
    };

    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, n);
    for (int bj = 0; bj < m; ++bj) {
        const int j0 = starts[bj], q = size_of(bj);
        for (int bi = 0; bi < m; ++bi) {
            const int i0 = starts[bi], p = size_of(bi);
            Eigen::MatrixXd rhs = -C.block(i0, j0, p, q);
            if (i0 > 0)
                rhs -= T.block(0, i0, i0, p).transpose() * Y.block(0, j0, i0, q);
            if (j0 > 0) rhs -= Y.block(i0, 0, p, j0) * T.block(0, j0, j0, q);

            const Eigen::MatrixXd Tii = T.block(i0, i0, p, p);
            const Eigen::MatrixXd Tjj = T.block(j0, j0, q, q);
            Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(p * q, p * q);
            // vec(Tii^T X + X Tjj) = (Iq (x) Tii^T + Tjj^T (x) Ip) vec(X)
            for (int c = 0; c < q; ++c)
                sys.block(c * p, c * p, p, p) += Tii.transpose();
            for (int c = 0; c < q; ++c)
                for (int r = 0; r < q; ++r)
                    sys.block(c * p, r * p, p, p) +=
                        Tjj(r, c) * Eigen::MatrixXd::Identity(p, p);
            Eigen::VectorXd vec_rhs(p * q);
            for (int c = 0; c < q; ++c) vec_rhs.segment(c * p, p) = rhs.col(c);
            const Eigen::VectorXd sol = sys.colPivHouseholderQr().solve(vec_rhs);
            for (int c = 0; c < q; ++c) Y.block(i0, j0, p, q).col(c) = sol.segment(c * p, p);
        }
    }
    return Y;
}

} // namespace detail

/// Solves F^T P + P F + 2 delta P = -Q for symmetric positive definite P.
/// Requires F + delta I Hurwitz; the residual is checked to 1e-8 and the
/// positive-definiteness through a Cholesky factorization.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, double delta,
                                      const Eigen::MatrixXd& Q) {
    const int n = static_cast<int>(F.rows());
    if (n == 0) return Eigen::MatrixXd(0, 0);
    const Eigen::MatrixXd A = F + delta * Eigen::MatrixXd::Identity(n, n);

    Eigen::RealSchur<Eigen::MatrixXd> schur(A);
    const Eigen::MatrixXd& T = schur.matrixT();
    const Eigen::MatrixXd& U = schur.matrixU();

    // abscissa straight off the Schur blocks
    double abscissa = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n;) {
        if (i + 1 < n && T(i + 1, i) != 0.0) {
            abscissa = std::max(abscissa, 0.5 * (T(i, i) + T(i + 1, i + 1)));
            i += 2;
        } else {
            abscissa = std::max(abscissa, T(i, i));
            i += 1;
        }
    }
    if (!(abscissa < 0.0))
        throw SynthesisError("solve_lyapunov: F + delta I is not Hurwitz (abscissa " +
                             std::to_string(abscissa) + ")");

    const Eigen::MatrixXd C = U.transpose() * Q * U;
    Eigen::MatrixXd Y = detail::schur_lyapunov(T, C);
    Eigen::MatrixXd P = U * Y * U.transpose();
    P = 0.5 * (P + P.transpose());

    // residual in extended precision: in double the evaluation floor
    // eps*||F||*||P|| alone can brush the gate at large dimensions
    auto residual_ld = [&](const Eigen::MatrixXd& Pc) {
        long double worst = 0.0L;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                long double acc = Q(r, c) + 2.0L * (long double)delta * (long double)Pc(r, c);
                for (int m = 0; m < n; ++m)
                    acc += (long double)F(m, r) * (long double)Pc(m, c) +
                           (long double)Pc(r, m) * (long double)F(m, c);
                worst = std::max(worst, acc < 0 ? -acc : acc);
            }
        return static_cast<double>(worst);
    };

    const double tol = 1e-8 * std::max(1.0, Q.cwiseAbs().maxCoeff());
    double res = (F.transpose() * P + P * F + 2.0 * delta * P + Q).cwiseAbs().maxCoeff();
    if (!(res < 0.5 * tol)) {
        // one pass of iterative refinement, then judge by the true residual
        const Eigen::MatrixXd R = F.transpose() * P + P * F + 2.0 * delta * P + Q;
        const Eigen::MatrixXd Cr = U.transpose() * R * U;
        Eigen::MatrixXd Yc = detail::schur_lyapunov(T, Cr);
        Eigen::MatrixXd corr = U * Yc * U.transpose();
        P += 0.5 * (corr + corr.transpose());
        res = residual_ld(P);
    }
    if (!(res < tol)) throw NumericalError("solve_lyapunov: residual " + format_scientific(res));
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success)
        throw NumericalError("solve_lyapunov: P is not positive definite");
    return P;
}

// ---------------------------------------------------------------------------
// Controller and closed-loop assembly.
// ---------------------------------------------------------------------------

struct Controller {
    Eigen::RowVectorXd Kx;
    double ku = 0.0;
    Eigen::VectorXd L;
    std::vector<int> n0;    // captured modes per group
    std::vector<int> n_ext; // observer extension per group
    double kappa = 0.0;
    double delta = 0.0;

    Eigen::RowVectorXd K() const {
        Eigen::RowVectorXd k(Kx.size() + 1);
        k << Kx, ku;
        return k;
    }

    static Controller design(const ModalModel& model, const ModalMatrices& mm) {
        Controller c;
        const Eigen::RowVectorXd K = design_state_gain(mm.A1a, mm.B1a, model.config().delta);
        c.Kx = K.head(K.size() - 1);
        c.ku = K(K.size() - 1);
        c.L = design_observer_gain(mm.A1, mm.C1, model.config().delta);
        c.n0 = mm.n0;
        c.n_ext = mm.n_ext;
        c.kappa = mm.kappa;
        c.delta = model.config().delta;
        return c;
    }

    /// Zero gains: open-loop dynamics with u frozen at its initial value.
    static Controller open_loop(const ModalMatrices& mm, double delta) {
        Controller c;
        c.Kx = Eigen::RowVectorXd::Zero(mm.dim1());
        c.ku = 0.0;
        c.L = Eigen::VectorXd::Zero(mm.dim1());
        c.n0 = mm.n0;
        c.n_ext = mm.n_ext;
        c.kappa = mm.kappa;
        c.delta = delta;
        return c;
    }
};

/// Closed-loop block matrices, state X = col(X^hat_{1,a}, E_1, X^hat_2, E_2)
/// driven by the measurement residue: dX/dt = F X + Lcal * zeta.
struct ClosedLoopMatrices {
    Eigen::MatrixXd F;
    Eigen::VectorXd Lcal;
    Eigen::RowVectorXd Etilde; // u = Etilde X
    Eigen::RowVectorXd Ktilde; // v = -Ktilde X
    int d1 = 0;                // low-mode state count
    int d2 = 0;                // middle-mode state count

    int dim() const { return static_cast<int>(F.rows()); }
    int off_u() const { return d1; }
    int off_e1() const { return d1 + 1; }
    int off_x2() const { return 2 * d1 + 1; }
    int off_e2() const { return 2 * d1 + 1 + d2; }
};

inline ClosedLoopMatrices assemble_closed_loop(const ModalMatrices& mm, const Controller& ctl) {
    ClosedLoopMatrices cl;
    cl.d1 = mm.dim1();
    cl.d2 = mm.dim2();
    const int d1 = cl.d1, d2 = cl.d2;
    const int dim = (d1 + 1) + d1 + 2 * d2;
    const Eigen::RowVectorXd K = ctl.K();

    Eigen::VectorXd La = Eigen::VectorXd::Zero(d1 + 1);
    La.head(d1) = ctl.L;

    cl.F = Eigen::MatrixXd::Zero(dim, dim);
    cl.F.block(0, 0, d1 + 1, d1 + 1) = mm.A1a - mm.B1a * K;
    cl.F.block(0, cl.off_e1(), d1 + 1, d1) = La * mm.C1;
    cl.F.block(0, cl.off_e2(), d1 + 1, d2) = La * mm.C2;
    cl.F.block(cl.off_e1(), cl.off_e1(), d1, d1) = mm.A1 - ctl.L * mm.C1;
    cl.F.block(cl.off_e1(), cl.off_e2(), d1, d2) = -ctl.L * mm.C2;
    Eigen::MatrixXd X2_in = Eigen::MatrixXd::Zero(d2, d1 + 1);
    X2_in.col(d1) = mm.B2u;
    cl.F.block(cl.off_x2(), 0, d2, d1 + 1) = X2_in - mm.B2v * K;
    cl.F.block(cl.off_x2(), cl.off_x2(), d2, d2) = mm.A2;
    cl.F.block(cl.off_e2(), cl.off_e2(), d2, d2) = mm.A2;

    cl.Lcal = Eigen::VectorXd::Zero(dim);
    cl.Lcal.head(d1) = ctl.L;
    cl.Lcal.segment(cl.off_e1(), d1) = -ctl.L;

    cl.Etilde = Eigen::RowVectorXd::Zero(dim);
    cl.Etilde(cl.off_u()) = 1.0;
    cl.Ktilde = Eigen::RowVectorXd::Zero(dim);
    cl.Ktilde.head(d1 + 1) = K;
    return cl;
}

// ---------------------------------------------------------------------------
// Certificate.
// ---------------------------------------------------------------------------

struct TailSum {
    double sum = 0.0;       // computed partial sum over (n, k_tail]
    double remainder = 0.0; // analytic bound on the discarded tail
    double total() const { return sum + remainder; }
};

struct Certificate {
    bool pass = false;
    double theta1_max_eig = 0.0;
    std::vector<double> gamma; // per group, evaluated at order n_ext + 1
    std::vector<double> eta;
    double epsilon = 0.0;
    std::vector<TailSum> S_alpha, S_beta, S_zeta;
    std::string eta_rule = "canonical"; // "canonical" or "gamma-limited"
    double functional_scale = 1.0;  // c: stored P solves F^T P + P F + 2 delta P = -c I
    double gamma_m = 0.0, gamma_M = 0.0; // identical-regime P_k bounds
    int k_tail = 0;
    Eigen::MatrixXd P;
    std::vector<Eigen::MatrixXd> Pk; // identical regime: P_k for k in [n_ext+1, k_tail]
    int Pk_first = 0;                // frequency index of Pk.front()

    std::string summary() const {
        std::ostringstream os;
        os << (pass ? "PASS" : "FAIL") << " theta1_max=" << theta1_max_eig << " gammas=[";
        for (std::size_t i = 0; i < gamma.size(); ++i) os << (i ? "," : "") << gamma[i];
        os << "]";
        return os.str();
    }
};

namespace detail {

// Tail remainder from the last computed terms: calibrates term_k <= C k^-p
// on the trailing decade and integrates the bound past k_tail.
inline double tail_remainder(const std::vector<std::pair<int, double>>& terms, double p,
                             int k_tail) {
    if (terms.empty()) return 0.0;
    double C = 0.0;
    const std::size_t from = terms.size() > 10 ? terms.size() - 10 : 0;
    for (std::size_t idx = from; idx < terms.size(); ++idx)
        C = std::max(C, terms[idx].second * std::pow(double(terms[idx].first), p));
    C *= 2.0; // safety factor
    return C * std::pow(double(k_tail), 1.0 - p) / (p - 1.0);
}

} // namespace detail

struct CertifyOptions {
    int k_tail_factor = 10; // k_tail = factor * (n_ext + 1)
    int k_sim_floor = 32;   // keep P_k available for the simulator range
};

/// Evaluates the order certificate for the given gains and extension orders:
/// assembles F, solves the Lyapunov equation, forms Theta_1 and the Gamma
/// margins, and reports pass/fail.
inline Certificate certify(const ModalModel& model, const ModalMatrices& mm,
                           const Controller& ctl, const CertifyOptions& opt = {}) {
    const double delta = model.config().delta;
    const bool distinct_regime = model.config().regime == Regime::Distinct;
    const double kappa = mm.kappa;
    const int G = model.groups();

    Certificate cert;
    const int n_max = *std::max_element(mm.n_ext.begin(), mm.n_ext.end());
    cert.k_tail = std::max(opt.k_tail_factor * (n_max + 1),
                           std::max(opt.k_sim_floor, 2 * (n_max + 1)));

    const ClosedLoopMatrices cl = assemble_closed_loop(mm, ctl);
    const Eigen::MatrixXd P1 =
        solve_lyapunov(cl.F, delta, Eigen::MatrixXd::Identity(cl.dim(), cl.dim()));

    // Coefficient tail sums per group. Decay exponents: alpha_k^2, beta_k^2 and
    // the distributed c_k^2 fall like k^-4; Dirichlet c^2/(1+k^2) like k^-2;
    // Neumann c^2/(1+k^2)^{7/4} like k^-1.5.
    const double p_zeta = kappa == 0.0 ? 4.0 : (kappa == 1.0 ? 2.0 : 1.5);
    cert.S_alpha.resize(G);
    cert.S_beta.resize(G);
    cert.S_zeta.resize(G);
    for (int g = 0; g < G; ++g) {
        std::vector<std::pair<int, double>> ta, tb, tz;
        for (int k = mm.n_ext[g] + 1; k <= cert.k_tail; ++k) {
            const double a2 = model.alpha_block(g, k).squaredNorm();
            const double b2 = model.beta_block(g, k).squaredNorm();
            const double c2 = model.c_block(g, k).squaredNorm();
            const double zterm = kappa == 0.0
                                     ? c2
                                     : c2 / std::pow(1.0 + double(k) * k, kappa == 1.0 ? 1.0 : 1.75);
            ta.emplace_back(k, a2);
            tb.emplace_back(k, b2);
            tz.emplace_back(k, zterm);
            cert.S_alpha[g].sum += a2;
            cert.S_beta[g].sum += b2;
            cert.S_zeta[g].sum += zterm;
        }
        cert.S_alpha[g].remainder = detail::tail_remainder(ta, 4.0, cert.k_tail);
        cert.S_beta[g].remainder = detail::tail_remainder(tb, 4.0, cert.k_tail);
        cert.S_zeta[g].remainder = detail::tail_remainder(tz, p_zeta, cert.k_tail);
    }

    // epsilon fixed at twice its admissibility threshold.
    if (distinct_regime) {
        cert.epsilon = 2.0 / (kPi * kPi);
    } else {
        const int first = *std::min_element(mm.n_ext.begin(), mm.n_ext.end()) + 1;
        cert.Pk_first = first;
        double gm = std::numeric_limits<double>::infinity(), gM = 0.0;
        for (int k = first; k <= cert.k_tail; ++k) {
            const Eigen::MatrixXd Mk = model.mode_block(0, k);
            const double lam = model.lambda_of(0, k);
            const Eigen::MatrixXd Pk = solve_lyapunov(
                Mk, delta, std::abs(lam) * Eigen::MatrixXd::Identity(Mk.rows(), Mk.cols()));
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Pk, Eigen::EigenvaluesOnly);
            gm = std::min(gm, es.eigenvalues().minCoeff());
            gM = std::max(gM, es.eigenvalues().maxCoeff());
            cert.Pk.push_back(Pk);
        }
        cert.gamma_m = 0.9 * gm;
        cert.gamma_M = 1.1 * gM;
        cert.epsilon = 2.0 * cert.gamma_M * cert.gamma_M / (kPi * kPi);
    }
    const double eps_threshold = distinct_regime
                                     ? 1.0 / (kPi * kPi)
                                     : cert.gamma_M * cert.gamma_M / (kPi * kPi);
    if (!(cert.epsilon > eps_threshold))
        throw NumericalError("certificate epsilon fell below the admissible threshold");

    // Gamma(eta) = base + eta * S_zeta * weight, evaluated at the first
    // discarded order; base < 0 once the order clears the decay threshold.
    std::vector<double> base(G), weight(G);
    for (int g = 0; g < G; ++g) {
        const int kstar = mm.n_ext[g] + 1;
        const double lam = model.lambda_of(g, kstar);
        const double k2 = 1.0 + double(kstar) * kstar;
        if (distinct_regime)
            base[g] = 2.0 * (lam + k2 / cert.epsilon + delta);
        else
            base[g] = 2.0 * (lam + cert.gamma_M * cert.gamma_M * k2 / cert.epsilon);
        if (kappa == 0.0) weight[g] = 1.0 / k2;
        else if (kappa == 1.0) weight[g] = 1.0;
        else weight[g] = std::pow(k2, 0.75);
    }

    // Theta_1 = [[Theta_11, P Lcal ... P Lcal], [Lcal^T P, -diag(eta)]] with
    // P = c P1 for a free scale c > 0: the V-dot derivation holds for every
    // positive multiple of the unit-normalized solution, and small c shrinks
    // the border quadratically against the -cI diagonal.
    double SaT = 0.0, SbT = 0.0;
    for (int g = 0; g < G; ++g) {
        SaT += cert.S_alpha[g].total();
        SbT += cert.S_beta[g].total();
    }
    const Eigen::MatrixXd eps_part =
        cert.epsilon * (SaT * cl.Etilde.transpose() * cl.Etilde +
                        SbT * cl.Ktilde.transpose() * cl.Ktilde);
    const Eigen::MatrixXd thetaF = cl.F.transpose() * P1 + P1 * cl.F + 2.0 * delta * P1;
    const int d = cl.dim();
    const Eigen::VectorXd PL1 = P1 * cl.Lcal;
    auto theta1_max = [&](const std::vector<double>& eta, double c) {
        Eigen::MatrixXd theta1 = Eigen::MatrixXd::Zero(d + G, d + G);
        theta1.topLeftCorner(d, d) = c * thetaF + eps_part;
        for (int g = 0; g < G; ++g) {
            theta1.block(0, d + g, d, 1) = c * PL1;
            theta1.block(d + g, 0, 1, d) = c * PL1.transpose();
            theta1(d + g, d + g) = -eta[g];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(theta1, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    };
    auto best_scale = [&](const std::vector<double>& eta) {
        double best_v = std::numeric_limits<double>::infinity(), best_e = 0.0;
        for (int e = 0; e <= 32; ++e) {
            const double expo = -8.0 + 8.0 * e / 32.0;
            const double v = theta1_max(eta, std::pow(10.0, expo));
            if (v < best_v) {
                best_v = v;
                best_e = expo;
            }
        }
        // golden-section refinement around the coarse minimum (log scale)
        double lo = best_e - 0.25, hi = best_e + 0.25;
        constexpr double invphi = 0.6180339887498949;
        double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
        double f1 = theta1_max(eta, std::pow(10.0, x1));
        double f2 = theta1_max(eta, std::pow(10.0, x2));
        for (int it = 0; it < 20; ++it) {
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - invphi * (hi - lo);
                f1 = theta1_max(eta, std::pow(10.0, x1));
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + invphi * (hi - lo);
                f2 = theta1_max(eta, std::pow(10.0, x2));
            }
        }
        const double expo = f1 < f2 ? x1 : x2;
        const double v = std::min(f1, f2);
        if (v < best_v) {
            best_v = v;
            best_e = expo;
        }
        return std::make_pair(best_v, std::pow(10.0, best_e));
    };

    // Canonical choice eta = 1/sqrt(S_zeta) (n_ext when the tail vanishes);
    // any eta > 0 is admissible, so when the canonical pick leaves Theta_1
    // indefinite, eta moves up to half its Gamma-feasibility limit.
    std::vector<double> eta(G);
    for (int g = 0; g < G; ++g) {
        const double sz = cert.S_zeta[g].total();
        eta[g] = sz > 0.0 ? 1.0 / std::sqrt(sz) : double(mm.n_ext[g]);
    }
    auto [tmax, scale] = best_scale(eta);
    cert.theta1_max_eig = tmax;
    cert.functional_scale = scale;
    if (cert.theta1_max_eig > 1e-10) {
        bool limit_ok = true;
        std::vector<double> eta2(G);
        for (int g = 0; g < G; ++g) {
            const double sz = cert.S_zeta[g].total();
            if (sz <= 0.0) {
                eta2[g] = eta[g];
            } else if (base[g] < 0.0) {
                eta2[g] = std::max(eta[g], 0.5 * (-base[g]) / (sz * weight[g]));
            } else {
                limit_ok = false; // Gamma cannot be nonpositive at this order
            }
        }
        if (limit_ok) {
            auto [t2, c2] = best_scale(eta2);
            if (t2 < cert.theta1_max_eig) {
                eta = eta2;
                cert.theta1_max_eig = t2;
                cert.functional_scale = c2;
                cert.eta_rule = "gamma-limited";
            }
        }
    }
    cert.eta = eta;
    cert.P = cert.functional_scale * P1;

    cert.gamma.resize(G);
    bool gammas_ok = true;
    for (int g = 0; g < G; ++g) {
        cert.gamma[g] = base[g] + eta[g] * cert.S_zeta[g].total() * weight[g];
        gammas_ok = gammas_ok && cert.gamma[g] <= 0.0;
    }

    cert.pass = (cert.theta1_max_eig <= 1e-10) && gammas_ok;
    return cert;
}

// ---------------------------------------------------------------------------
// Order search: doubling then binary refinement on the uniform increment
// applied to every group, hard cap 512.
// ---------------------------------------------------------------------------

struct OrderSearchResult {
    bool found = false;
    std::vector<int> n_ext;
    Certificate certificate;      // of the passing orders when found
    Certificate last_certificate; // last attempt otherwise
    int increments_tried = 0;
};

inline std::vector<int> orders_at(const std::vector<int>& n0, int inc) {
    std::vector<int> n(n0.size());
    for (std::size_t g = 0; g < n0.size(); ++g) n[g] = n0[g] + inc;
    return n;
}

inline OrderSearchResult search_orders(const ModalModel& model, const Controller& base_ctl,
                                       const CertifyOptions& opt = {}) {
    constexpr int kCap = 512;
    OrderSearchResult res;
    const std::vector<int>& n0 = model.orders();

    auto attempt = [&](int inc) {
        const std::vector<int> n = orders_at(n0, inc);
        const ModalMatrices mm = model.assemble(n);
        Controller ctl = base_ctl;
        ctl.n_ext = n;
        Certificate cert = certify(model, mm, ctl, opt);
        ++res.increments_tried;
        res.last_certificate = cert;
        return std::make_pair(cert.pass, cert);
    };

    int lo = 0; // highest failing increment
    int hi = -1;
    Certificate pass_cert;
    for (int inc = 1; inc <= kCap; inc *= 2) {
        auto [ok, cert] = attempt(inc);
        if (ok) {
            hi = inc;
            pass_cert = cert;
            break;
        }
        lo = inc;
    }
    if (hi < 0) return res; // cap reached, res.found stays false

    while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        auto [ok, cert] = attempt(mid);
        if (ok) {
            hi = mid;
            pass_cert = cert;
        } else {
            lo = mid;
        }
    }
    res.found = true;
    res.n_ext = orders_at(n0, hi);
    res.certificate = pass_cert;
    return res;
}

} // namespace casctrl
