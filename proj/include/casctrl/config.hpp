#pragma once

// Cascade configuration and validation. The cascade couples N reaction-
// diffusion equations on [0,1] through their boundaries; the scalar control
// enters equation N, the scalar measurement reads equation 1.

#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "casctrl/funcalg.hpp"

namespace casctrl {

/// Invalid configuration or scenario (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Synthesis infeasible: unobservable mode, ill-conditioned placement,
/// order-search cap (CLI exit code 3).
class SynthesisError : public std::runtime_error {
public:
    explicit SynthesisError(const std::string& what) : std::runtime_error(what) {}
};

/// Time integration failure: NaN/overflow or non-convergent oracle grid
/// (CLI exit code 4).
class IntegrationError : public std::runtime_error {
public:
    explicit IntegrationError(const std::string& what) : std::runtime_error(what) {}
};

enum class Regime { Distinct, Identical };

enum class MeasurementType { Distributed, Dirichlet, Neumann };

struct Measurement {
    MeasurementType type = MeasurementType::Distributed;
    ScalarFn weight;   // c(x), distributed only
    double xi = 0.5;   // sensor location, pointwise only

    static Measurement distributed(ScalarFn c) {
        Measurement m;
        m.type = MeasurementType::Distributed;
        m.weight = std::move(c);
        return m;
    }
    static Measurement dirichlet(double xi) {
        Measurement m;
        m.type = MeasurementType::Dirichlet;
        m.xi = xi;
        return m;
    }
    static Measurement neumann(double xi) {
        Measurement m;
        m.type = MeasurementType::Neumann;
        m.xi = xi;
        return m;
    }
};

// Numerical stand-in for the disjoint-spectra assumption: reject whenever two
// chains have eigenvalues closer than this over the checked frequency range.
inline constexpr double kSpectralGapTol = 1e-6;
inline constexpr int kSpectralGapKCheck = 200;

// cosh overflows past rho ~ 700; reject configurations long before that.
inline constexpr double kMaxHyperbolicRho = 300.0;

struct CascadeConfig {
    int N = 1;
    std::vector<double> a; // reaction coefficients a_1..a_N
    Regime regime = Regime::Distinct;
    double delta = 0.5;    // target closed-loop decay rate
    Measurement measurement;

    double lambda(int i, int k) const { return a.at(static_cast<std::size_t>(i) - 1) - double(k) * k * kPi * kPi; }

    /// Smallest spectral gap min |lambda_{i,k} - lambda_{j,k'}| over i != j,
    /// k,k' <= kSpectralGapKCheck. Only meaningful in the distinct regime.
    double min_spectral_gap() const {
        double gap = std::numeric_limits<double>::infinity();
        for (int i = 0; i < N; ++i) {
            for (int j = i + 1; j < N; ++j) {
                const double d = a[i] - a[j];
                for (int k = 0; k <= kSpectralGapKCheck; ++k) {
                    for (int kp = 0; kp <= kSpectralGapKCheck; ++kp) {
                        const double sep =
                            std::abs(d - (double(k) * k - double(kp) * kp) * kPi * kPi);
                        gap = std::min(gap, sep);
                    }
                }
            }
        }
        return gap;
    }

    void validate() const {
        if (N < 1) throw ConfigError("N must be >= 1");
        if (static_cast<int>(a.size()) != N)
            throw ConfigError("reaction coefficient list must have N entries");
        if (!(delta > 0.0)) throw ConfigError("delta must be positive");
        if (measurement.type != MeasurementType::Distributed &&
            !(measurement.xi >= 0.0 && measurement.xi <= 1.0))
            throw ConfigError("sensor location xi must lie in [0,1]");

        if (regime == Regime::Identical) {
            for (double aj : a)
                if (aj != a.front())
                    throw ConfigError(
                        "identical regime requires all reaction coefficients equal; "
                        "intermediate multiplicity cases are not supported");
        } else if (N > 1) {
            const double gap = min_spectral_gap();
            if (gap < kSpectralGapTol)
                throw ConfigError("spectra not disjoint: min eigenvalue gap " +
                                  std::to_string(gap) + " below tolerance");
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    if (i != j && a[i] - a[j] > kMaxHyperbolicRho * kMaxHyperbolicRho)
                        throw ConfigError("reaction coefficient spread too large for the "
                                          "hyperbolic eigenvector factors");
        }

        if (measurement.type == MeasurementType::Neumann) {
            if (regime == Regime::Identical)
                throw SynthesisError(
                    "Neumann measurement cannot stabilize the identical cascade: mode "
                    "(1,0) is unobservable (c_{1,0} = 0)");
            if (a.front() >= 0.0)
                throw SynthesisError(
                    "Neumann measurement with a_1 >= 0: mode (1,0) is unobservable "
                    "(c_{1,0} = 0) and unstable");
            if (!(delta < -a.front()))
                throw ConfigError("Neumann measurement requires delta in (0, -a_1)");
        }
    }
};

} // namespace casctrl
