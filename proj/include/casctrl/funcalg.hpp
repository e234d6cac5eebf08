#pragma once

// Exact-coefficient algebra for the scalar functions the cascade eigenstructure
// lives in: polynomial-times-trigonometric atoms P(x)cos(k pi x) + Q(x)sin(k pi x)
// and hyperbolic/trigonometric atoms A*cosh(rho(1-x)), A*cosh(rho x) (and their
// sinh/sin counterparts, which show up through differentiation).
//
// Everything is defined on x in [0,1]. PolyTrig x PolyTrig inner products are
// evaluated in closed form through antiderivative recurrences; any product that
// involves a hyperbolic atom goes through adaptive composite Gauss-Legendre
// quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace casctrl {

inline constexpr double kPi = std::numbers::pi;

// Absolute threshold under which trailing polynomial coefficients are dropped.
inline constexpr double kCoeffEps = 1e-14;

/// Raised when an iterative numerical procedure fails to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Dense polynomial helpers, coefficients in increasing degree order.
// ---------------------------------------------------------------------------

using Poly = std::vector<double>;

namespace poly {

inline void trim(Poly& p, double eps = kCoeffEps) {
    while (!p.empty() && std::abs(p.back()) <= eps) p.pop_back();
}

inline double eval(const Poly& p, double x) {
    double acc = 0.0;
    for (std::size_t m = p.size(); m-- > 0;) acc = acc * x + p[m];
    return acc;
}

inline Poly add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t m = 0; m < a.size(); ++m) out[m] += a[m];
    for (std::size_t m = 0; m < b.size(); ++m) out[m] += b[m];
    trim(out);
    return out;
}

inline Poly scale(Poly p, double s) {
    for (double& c : p) c *= s;
    trim(p);
    return p;
}

inline Poly mul(const Poly& a, const Poly& b) {
    if (a.empty() || b.empty()) return {};
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t m = 0; m < a.size(); ++m)
        for (std::size_t n = 0; n < b.size(); ++n) out[m + n] += a[m] * b[n];
    trim(out);
    return out;
}

inline Poly derivative(const Poly& p) {
    if (p.size() <= 1) return {};
    Poly out(p.size() - 1);
    for (std::size_t m = 1; m < p.size(); ++m) out[m - 1] = p[m] * static_cast<double>(m);
    trim(out);
    return out;
}

// Antiderivative with zero constant term.
inline Poly antiderivative(const Poly& p) {
    if (p.empty()) return {};
    Poly out(p.size() + 1, 0.0);
    for (std::size_t m = 0; m < p.size(); ++m) out[m + 1] = p[m] / static_cast<double>(m + 1);
    return out;
}

} // namespace poly

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature (order 32, composite, adaptive interval halving).
// ---------------------------------------------------------------------------

inline constexpr int kQuadOrder = 32;
inline constexpr int kQuadMaxSubintervals = 1 << 14;
inline constexpr double kQuadRelTol = 1e-12;

namespace detail {

struct GaussRule {
    std::array<double, kQuadOrder> node{};
    std::array<double, kQuadOrder> weight{};
};

// Nodes/weights on [-1,1] by Newton iteration on the Legendre recurrence.
inline const GaussRule& gauss_rule() {
    static const GaussRule rule = [] {
        GaussRule r;
        const int n = kQuadOrder;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (int m = 2; m <= n; ++m) {
                    const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            r.node[i] = -x;
            r.weight[i] = w;
            r.node[n - 1 - i] = x;
            r.weight[n - 1 - i] = w;
        }
        return r;
    }();
    return rule;
}

} // namespace detail

/// Integrates f over [0,1] by composite 32-point Gauss-Legendre, halving the
/// subinterval count until two successive estimates agree to kQuadRelTol
/// (relative, with an absolute floor tied to the sampled magnitude).
inline double integrate_adaptive(const std::function<double(double)>& f,
                                 double rel_tol = kQuadRelTol) {
    const auto& rule = detail::gauss_rule();
    double max_mag = 1.0;
    auto composite = [&](int pieces) {
        double total = 0.0;
        const double h = 1.0 / pieces;
        for (int p = 0; p < pieces; ++p) {
            const double lo = p * h;
            double acc = 0.0;
            for (int q = 0; q < kQuadOrder; ++q) {
                const double x = lo + 0.5 * h * (rule.node[q] + 1.0);
                const double v = f(x);
                max_mag = std::max(max_mag, std::abs(v));
                acc += rule.weight[q] * v;
            }
            total += 0.5 * h * acc;
        }
        return total;
    };
    double prev = composite(1);
    for (int pieces = 2; pieces <= kQuadMaxSubintervals; pieces *= 2) {
        const double cur = composite(pieces);
        const double tol = rel_tol * std::max({std::abs(cur), 1.0, max_mag});
        if (std::abs(cur - prev) <= tol) return cur;
        prev = cur;
    }
    throw NumericalError("quadrature did not converge, last residual " +
                         std::to_string(std::abs(prev)));
}

// ---------------------------------------------------------------------------
// PolyTrigAtom: P(x) cos(k pi x) + Q(x) sin(k pi x), k a nonnegative integer.
// k = 0 degenerates to the pure polynomial P.
// ---------------------------------------------------------------------------

struct PolyTrigAtom {
    int freq_index = 0; // omega = freq_index * pi
    Poly cos_coeffs;    // P
    Poly sin_coeffs;    // Q, unused (kept empty) when freq_index == 0

    PolyTrigAtom() = default;
    PolyTrigAtom(int k, Poly p, Poly q)
        : freq_index(k), cos_coeffs(std::move(p)), sin_coeffs(std::move(q)) {
        if (freq_index < 0) throw std::invalid_argument("PolyTrigAtom: negative frequency index");
        if (freq_index == 0 && !sin_coeffs.empty())
            throw std::invalid_argument("PolyTrigAtom: sin part with zero frequency");
        poly::trim(cos_coeffs);
        poly::trim(sin_coeffs);
    }

    double omega() const { return freq_index * kPi; }

    bool empty() const { return cos_coeffs.empty() && sin_coeffs.empty(); }

    double eval(double x) const {
        if (freq_index == 0) return poly::eval(cos_coeffs, x);
        const double w = omega() * x;
        return poly::eval(cos_coeffs, x) * std::cos(w) + poly::eval(sin_coeffs, x) * std::sin(w);
    }

    // (P' + wQ) cos + (Q' - wP) sin
    PolyTrigAtom derivative() const {
        const double w = omega();
        if (freq_index == 0) return PolyTrigAtom(0, poly::derivative(cos_coeffs), {});
        Poly dc = poly::add(poly::derivative(cos_coeffs), poly::scale(sin_coeffs, w));
        Poly ds = poly::add(poly::derivative(sin_coeffs), poly::scale(cos_coeffs, -w));
        return PolyTrigAtom(freq_index, std::move(dc), std::move(ds));
    }

    PolyTrigAtom scaled(double s) const {
        return PolyTrigAtom(freq_index, poly::scale(cos_coeffs, s), poly::scale(sin_coeffs, s));
    }
};

namespace detail {

// Definite integrals Ic[n] = int_0^1 x^n cos(m pi x) dx, Is[n] = int_0^1 x^n sin(m pi x) dx,
// for n = 0..deg, via the integration-by-parts recurrence.
inline void trig_moments(int m, int deg, std::vector<double>& Ic, std::vector<double>& Is) {
    Ic.assign(deg + 1, 0.0);
    Is.assign(deg + 1, 0.0);
    if (m == 0) {
        for (int n = 0; n <= deg; ++n) Ic[n] = 1.0 / (n + 1.0);
        return;
    }
    const double w = m * kPi;
    const double cos1 = (m % 2 == 0) ? 1.0 : -1.0; // cos(m pi)
    Ic[0] = 0.0;
    Is[0] = (1.0 - cos1) / w;
    for (int n = 1; n <= deg; ++n) {
        Ic[n] = -(n / w) * Is[n - 1];
        Is[n] = -cos1 / w + (n / w) * Ic[n - 1];
    }
}

inline double integral01(const PolyTrigAtom& a) {
    const int deg = static_cast<int>(std::max(a.cos_coeffs.size(), a.sin_coeffs.size()));
    if (deg == 0) return 0.0;
    std::vector<double> Ic, Is;
    trig_moments(a.freq_index, deg - 1, Ic, Is);
    double acc = 0.0;
    for (std::size_t n = 0; n < a.cos_coeffs.size(); ++n) acc += a.cos_coeffs[n] * Ic[n];
    for (std::size_t n = 0; n < a.sin_coeffs.size(); ++n) acc += a.sin_coeffs[n] * Is[n];
    return acc;
}

// Product-to-sum: the product of atoms at frequency indices k1, k2 is a pair of
// atoms at |k1-k2| and k1+k2.
inline std::vector<PolyTrigAtom> product(const PolyTrigAtom& a, const PolyTrigAtom& b) {
    const Poly pp = poly::mul(a.cos_coeffs, b.cos_coeffs);
    const Poly qq = poly::mul(a.sin_coeffs, b.sin_coeffs);
    const Poly qp = poly::mul(a.sin_coeffs, b.cos_coeffs);
    const Poly pq = poly::mul(a.cos_coeffs, b.sin_coeffs);

    std::vector<PolyTrigAtom> out;
    const int ks = a.freq_index + b.freq_index;
    const int kd = a.freq_index - b.freq_index; // signed

    // cos(k1)cos(k2) = (cos(kd) + cos(ks))/2 ; sin sin = (cos(kd) - cos(ks))/2
    // sin(k1)cos(k2) = (sin(ks) + sin(kd))/2 ; cos sin = (sin(ks) - sin(kd))/2
    Poly cs = poly::scale(poly::add(pp, poly::scale(qq, -1.0)), 0.5);
    Poly ss = poly::scale(poly::add(qp, pq), 0.5);
    if (ks == 0) {
        if (!cs.empty()) out.emplace_back(0, std::move(cs), Poly{});
    } else if (!cs.empty() || !ss.empty()) {
        out.emplace_back(ks, std::move(cs), std::move(ss));
    }

    Poly cd = poly::scale(poly::add(pp, qq), 0.5);
    Poly sd = poly::scale(poly::add(qp, poly::scale(pq, -1.0)), 0.5);
    if (kd < 0) sd = poly::scale(sd, -1.0); // sin is odd, cos is even
    if (kd == 0) {
        if (!cd.empty()) out.emplace_back(0, std::move(cd), Poly{});
    } else if (!cd.empty() || !sd.empty()) {
        out.emplace_back(std::abs(kd), std::move(cd), std::move(sd));
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// HyperAtom: amplitude * {cosh|sinh}(rho * t) with t = x or 1-x, or the
// trigonometric twin {cos|sin}(rho t) when rho^2 entered with negative sign.
// ---------------------------------------------------------------------------

enum class HyperKind { CoshLike, SinhLike };
enum class HyperArg { X, OneMinusX };

struct HyperAtom {
    double amplitude = 0.0;
    double rho = 0.0; // principal nonnegative square root of |lambda - a|
    bool trig = false; // true: rho^2 < 0 branch, cosh -> cos, sinh -> sin
    HyperKind kind = HyperKind::CoshLike;
    HyperArg arg = HyperArg::X;

    HyperAtom() = default;
    HyperAtom(double amp, double r, bool trig_flag, HyperKind kd, HyperArg ag)
        : amplitude(amp), rho(std::abs(r)), trig(trig_flag), kind(kd), arg(ag) {}

    double eval(double x) const {
        const double t = (arg == HyperArg::X) ? x : 1.0 - x;
        return amplitude * base(rho * t);
    }

    HyperAtom derivative() const {
        // d/dx of the inner argument is +rho (arg = x) or -rho (arg = 1-x);
        // the trig cosine branch picks up the extra sign from cos' = -sin.
        HyperAtom d = *this;
        double factor = (arg == HyperArg::X) ? rho : -rho;
        if (trig && kind == HyperKind::CoshLike) factor = -factor;
        d.amplitude = amplitude * factor;
        d.kind = (kind == HyperKind::CoshLike) ? HyperKind::SinhLike : HyperKind::CoshLike;
        return d;
    }

private:
    // cosh/sinh (or cos/sin) with a short even/odd series near rho ~ 0, where
    // the formulas are analytic in rho^2.
    double base(double y) const {
        const double s2 = trig ? -(y * y) : (y * y); // signed rho^2 t^2
        if (std::abs(y) < 1e-5) {
            if (kind == HyperKind::CoshLike)
                return 1.0 + s2 / 2.0 + s2 * s2 / 24.0 + s2 * s2 * s2 / 720.0 +
                       s2 * s2 * s2 * s2 / 40320.0;
            // sinh(y)/sin(y) ~ y (1 + s2/6 + s2^2/120 + s2^3/5040 + s2^4/362880)
            return y * (1.0 + s2 / 6.0 + s2 * s2 / 120.0 + s2 * s2 * s2 / 5040.0 +
                        s2 * s2 * s2 * s2 / 362880.0);
        }
        if (kind == HyperKind::CoshLike) return trig ? std::cos(y) : std::cosh(y);
        return trig ? std::sin(y) : std::sinh(y);
    }
};

/// r * sinh(r) for r one of the two square roots of s = lambda - a. Even in r,
/// hence a function of s alone: rho*sinh(rho) for s > 0, -rho*sin(rho) for
/// s < 0, with the analytic series s(1 + s/6 + s^2/120 + ...) near s = 0.
inline double r_sinh_r(double s) {
    if (std::abs(s) < 1e-10)
        return s * (1.0 + s / 6.0 + s * s / 120.0 + s * s * s / 5040.0);
    const double rho = std::sqrt(std::abs(s));
    return s > 0 ? rho * std::sinh(rho) : -rho * std::sin(rho);
}

// ---------------------------------------------------------------------------
// ScalarFn: a finite sum of PolyTrig and Hyper atoms, closed under linear
// combinations and differentiation.
// ---------------------------------------------------------------------------

class ScalarFn {
public:
    std::vector<PolyTrigAtom> trig_atoms; // merged by frequency index
    std::vector<HyperAtom> hyper_atoms;

    ScalarFn() = default;

    static ScalarFn zero() { return ScalarFn(); }

    static ScalarFn polynomial(Poly p) {
        ScalarFn f;
        f.add_atom(PolyTrigAtom(0, std::move(p), {}));
        return f;
    }

    static ScalarFn constant(double c) { return polynomial({c}); }

    static ScalarFn cosine(double amp, int k) {
        ScalarFn f;
        if (k == 0) return polynomial({amp});
        f.add_atom(PolyTrigAtom(k, {amp}, {}));
        return f;
    }

    static ScalarFn sine(double amp, int k) {
        ScalarFn f;
        if (k == 0) return f;
        f.add_atom(PolyTrigAtom(k, {}, {amp}));
        return f;
    }

    static ScalarFn hyper(HyperAtom atom) {
        ScalarFn f;
        f.add_atom(atom);
        return f;
    }

    bool is_zero() const { return trig_atoms.empty() && hyper_atoms.empty(); }
    bool pure_polytrig() const { return hyper_atoms.empty(); }

    void add_atom(const PolyTrigAtom& a) {
        if (a.empty()) return;
        for (auto& existing : trig_atoms) {
            if (existing.freq_index == a.freq_index) {
                existing = PolyTrigAtom(a.freq_index,
                                        poly::add(existing.cos_coeffs, a.cos_coeffs),
                                        poly::add(existing.sin_coeffs, a.sin_coeffs));
                if (existing.empty()) {
                    std::erase_if(trig_atoms, [&](const PolyTrigAtom& t) { return t.empty(); });
                }
                return;
            }
        }
        trig_atoms.push_back(a);
    }

    void add_atom(const HyperAtom& h) {
        if (h.amplitude == 0.0) return;
        hyper_atoms.push_back(h);
    }

    ScalarFn& operator+=(const ScalarFn& other) {
        for (const auto& a : other.trig_atoms) add_atom(a);
        for (const auto& h : other.hyper_atoms) add_atom(h);
        return *this;
    }

    ScalarFn& operator*=(double s) {
        if (s == 0.0) {
            trig_atoms.clear();
            hyper_atoms.clear();
            return *this;
        }
        for (auto& a : trig_atoms) a = a.scaled(s);
        for (auto& h : hyper_atoms) h.amplitude *= s;
        return *this;
    }

    friend ScalarFn operator+(ScalarFn a, const ScalarFn& b) { return a += b; }
    friend ScalarFn operator*(double s, ScalarFn f) { return f *= s; }
    friend ScalarFn operator*(ScalarFn f, double s) { return f *= s; }
    friend ScalarFn operator-(ScalarFn a, const ScalarFn& b) {
        ScalarFn nb = b;
        nb *= -1.0;
        return a += nb;
    }

    // Unchecked evaluation; quadrature and grid loops stay inside [0,1].
    double eval_raw(double x) const {
        double acc = 0.0;
        for (const auto& a : trig_atoms) acc += a.eval(x);
        for (const auto& h : hyper_atoms) acc += h.eval(x);
        return acc;
    }

    ScalarFn derivative() const {
        ScalarFn d;
        for (const auto& a : trig_atoms) d.add_atom(a.derivative());
        for (const auto& h : hyper_atoms) d.add_atom(h.derivative());
        return d;
    }
};

/// Pointwise evaluation on the domain [0,1].
inline double evaluate(const ScalarFn& f, double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("evaluate: x outside [0,1]");
    return f.eval_raw(x);
}

/// Closed-form int_0^1 f g dx; both operands must be pure PolyTrig.
inline double inner_product_closed_form(const ScalarFn& f, const ScalarFn& g) {
    if (!f.pure_polytrig() || !g.pure_polytrig())
        throw std::invalid_argument("inner_product_closed_form: hyperbolic atom present");
    double acc = 0.0;
    for (const auto& a : f.trig_atoms)
        for (const auto& b : g.trig_atoms)
            for (const auto& prod : detail::product(a, b)) acc += detail::integral01(prod);
    return acc;
}

/// Quadrature path for int_0^1 f g dx.
inline double inner_product_quadrature(const ScalarFn& f, const ScalarFn& g) {
    return integrate_adaptive([&](double x) { return f.eval_raw(x) * g.eval_raw(x); });
}

/// int_0^1 f g dx: closed form when both operands are PolyTrig, quadrature as
/// soon as a hyperbolic atom is involved.
inline double inner_product(const ScalarFn& f, const ScalarFn& g) {
    if (f.is_zero() || g.is_zero()) return 0.0;
    if (f.pure_polytrig() && g.pure_polytrig()) return inner_product_closed_form(f, g);
    return inner_product_quadrature(f, g);
}

inline double integral01(const ScalarFn& f) {
    if (f.is_zero()) return 0.0;
    if (f.pure_polytrig()) {
        double acc = 0.0;
        for (const auto& a : f.trig_atoms) acc += detail::integral01(a);
        return acc;
    }
    return integrate_adaptive([&](double x) { return f.eval_raw(x); });
}

// ---------------------------------------------------------------------------
// Closed-form building blocks for the sigma/tau recursions: the unique
// solution of f'' + (k pi)^2 f = g with f(0) = f'(0) = 0, for g a PolyTrig
// function concentrated at frequency k. Equals the variation-of-parameters
// convolution (1/kpi) int_0^x sin(kpi(x-s)) g(s) ds (resp. int_0^x (x-s) g ds
// for k = 0).
// ---------------------------------------------------------------------------

inline ScalarFn particular_zero_ic(const ScalarFn& g, int k) {
    if (!g.pure_polytrig())
        throw std::invalid_argument("particular_zero_ic: PolyTrig input required");
    if (g.is_zero()) return ScalarFn::zero();

    Poly gc, gs;
    for (const auto& a : g.trig_atoms) {
        if (a.freq_index != k)
            throw std::invalid_argument("particular_zero_ic: input not at frequency k");
        gc = poly::add(gc, a.cos_coeffs);
        gs = poly::add(gs, a.sin_coeffs);
    }

    if (k == 0) {
        // f = double antiderivative of g with zero constants.
        return ScalarFn::polynomial(poly::antiderivative(poly::antiderivative(gc)));
    }

    // Undetermined coefficients f = Fc cos + Fs sin at the same frequency:
    //   Fc'' + 2w Fs' = Gc,  Fs'' - 2w Fc' = Gs,
    // solved from the top degree down; the secular response raises the degree
    // by exactly one.
    const double w = k * kPi;
    const int dmax = static_cast<int>(std::max(gc.size(), gs.size())) - 1;
    Poly a(dmax + 3, 0.0), b(dmax + 3, 0.0); // f = a cos + b sin
    gc.resize(dmax + 1, 0.0);
    gs.resize(dmax + 1, 0.0);
    for (int t = dmax; t >= 0; --t) {
        const double c2 = static_cast<double>(t + 2) * (t + 1);
        b[t + 1] = (gc[t] - a[t + 2] * c2) / (2.0 * w * (t + 1));
        a[t + 1] = (b[t + 2] * c2 - gs[t]) / (2.0 * w * (t + 1));
    }
    a[0] = 0.0;          // f(0) = 0
    b[0] = -a[1] / w;    // f'(0) = 0
    a.resize(dmax + 2);
    b.resize(dmax + 2);
    ScalarFn f;
    f.add_atom(PolyTrigAtom(k, std::move(a), std::move(b)));
    return f;
}

// ---------------------------------------------------------------------------
// BasisVector: an N-tuple of ScalarFn (one per cascade component).
// ---------------------------------------------------------------------------

struct ModeIndex {
    int chain = 1; // i, 1..N (generalized-eigenvector rank in the identical regime)
    int freq = 0;  // k >= 0

    friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

enum class BasisKind { Phi, Psi };

struct BasisVector {
    std::vector<ScalarFn> comp; // size N
    ModeIndex mode;
    BasisKind kind = BasisKind::Phi;

    int dimension() const { return static_cast<int>(comp.size()); }
    const ScalarFn& component(int j) const { return comp.at(static_cast<std::size_t>(j) - 1); } // 1-based
};

/// mu_k normalization of the cosine family: mu_0 = 1, mu_k = sqrt(2).
inline double mu_norm(int k) { return k == 0 ? 1.0 : std::numbers::sqrt2; }

inline double vector_inner_product(const BasisVector& f, const BasisVector& g) {
    if (f.dimension() != g.dimension())
        throw std::invalid_argument("vector_inner_product: dimension mismatch");
    double acc = 0.0;
    for (int j = 0; j < f.dimension(); ++j) acc += inner_product(f.comp[j], g.comp[j]);
    return acc;
}

inline double h1_inner_product(const BasisVector& f, const BasisVector& g) {
    if (f.dimension() != g.dimension())
        throw std::invalid_argument("h1_inner_product: dimension mismatch");
    double acc = 0.0;
    for (int j = 0; j < f.dimension(); ++j) {
        acc += inner_product(f.comp[j], g.comp[j]);
        acc += inner_product(f.comp[j].derivative(), g.comp[j].derivative());
    }
    return acc;
}

} // namespace casctrl
