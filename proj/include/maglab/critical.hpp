#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "maglab/action.hpp"
#include "maglab/dynamics.hpp"

// Estimators for the critical energy values of a magnetic pair:
//  - tau_plus: threshold below which the Taimanov functional goes negative
//    on embedded discs (positive iff the field oscillates);
//  - mane: the critical value separating bounded from unbounded action,
//    estimated analytically (constant fields, via the bounded primitive at
//    u = 0) and dynamically (closed/open transition of the circular orbits);
//  - tau_plus_star = min(tau_plus, mane dynamical), the working energy
//    ceiling for the orbit search.

namespace maglab {

struct TauPlusOptions {
    int radius_samples = 48;
    int boundary_points = 192;
    double k_cap = 10.0;
    double rel_tol = 1e-3;
    int fan_depth = 2;
};

namespace detail {

/// Largest disc radius around the bump center that stays inside the
/// fundamental octagon (with margin), or a generous default without group.
inline double max_disc_radius(const MagneticSystem& sys) {
    if (sys.group == nullptr) return std::max(1.5, 1.5 * sys.bump_radius);
    const double room = sys.group->apothem -
                        hyperbolic_distance(sys.bump_center, sys.group->center);
    return 0.95 * room;
}

/// min over the disc family of T_k(disc of radius r at the bump center).
/// With early_exit the scan stops at the first negative value (enough for
/// the sign queries of the bisection).
inline double taimanov_min_over_discs(const MagneticSystem& sys, double k,
                                      const TauPlusOptions& opt, bool early_exit = false) {
    const double rmax = max_disc_radius(sys);
    double best = 0.0;  // empty region is always available
    for (int i = 1; i <= opt.radius_samples; ++i) {
        const double r = rmax * i / opt.radius_samples;
        auto region = TaimanovRegion::disc(
            circle_loop(sys.bump_center, r, opt.boundary_points, 1.0, /*ccw=*/true).pts);
        best = std::min(best, taimanov_Tk(region, sys, k, opt.fan_depth));
        if (early_exit && best < 0.0) return best;
    }
    return best;
}

}  // namespace detail

/// Threshold energy where the minimal Taimanov value over the centered disc
/// family crosses zero. Returns 0 for everywhere-nonnegative fields; a
/// strictly positive value for oscillating ones (a lower bound for the true
/// critical value, which is a supremum over all regions and finite covers).
inline double estimate_tau_plus(const MagneticSystem& sys, const TauPlusOptions& opt = {}) {
    if (sys.min_density() >= 0.0) return 0.0;
    auto negative_at = [&](double k) {
        return detail::taimanov_min_over_discs(sys, k, opt, /*early_exit=*/true) < 0.0;
    };
    double lo = 1e-9;
    if (!negative_at(lo)) return 0.0;
    double hi = lo;
    while (hi < opt.k_cap && negative_at(hi)) hi *= 2.0;
    if (hi >= opt.k_cap) return opt.k_cap;
    lo = hi / 2.0;
    while ((hi - lo) > opt.rel_tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (negative_at(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct ManeEstimate {
    std::optional<double> analytic;  // sup (1/2)||theta||^2 at u = 0; constant fields only
    double dynamical = 0.0;          // closed/open transition of circular orbits
    double grid_resolution = 0.0;
};

/// Mane critical value estimators. The analytic route evaluates the
/// inf-sup formula at u = 0 with the bounded primitive s dx/y, giving
/// exactly s^2/2 (sharp for constant fields). The dynamical route brackets
/// the energy where the circular orbits stop closing.
inline ManeEstimate estimate_mane(const MagneticSystem& sys, double grid_resolution = 0.02) {
    ManeEstimate est;
    est.grid_resolution = grid_resolution;
    if (sys.kind == FieldKind::constant)
        est.analytic = 0.5 * sys.strength * sys.strength;
    if (sys.kind == FieldKind::constant && sys.strength == 0.0) {
        est.dynamical = 0.0;
        return est;
    }
    auto closes = [&](double k) {
        MagneticSystem s = sys;
        s.energy = k;
        return symmetric_orbit_radius(s, k).has_value();
    };
    // coarse grid at the requested resolution, then one refinement pass
    double k = grid_resolution;
    double last_closed = 0.0;
    while (k < 100.0 && closes(k)) {
        last_closed = k;
        k += grid_resolution;
    }
    if (last_closed == 0.0) {
        est.dynamical = 0.0;
        return est;
    }
    est.dynamical = 0.5 * (last_closed + k);  // midpoint of the bracket
    return est;
}

struct TauPlusStar {
    double tau_plus = 0.0;
    double mane_dynamical = 0.0;
    std::optional<double> mane_analytic;
    double value = 0.0;  // min(tau_plus, mane_dynamical)
};

/// Working energy ceiling tau_+^* = min(tau_+, c). Both operands reported.
inline TauPlusStar tau_plus_star(const MagneticSystem& sys, const TauPlusOptions& topt = {},
                                 double mane_resolution = 0.02) {
    TauPlusStar out;
    out.tau_plus = estimate_tau_plus(sys, topt);
    const ManeEstimate m = estimate_mane(sys, mane_resolution);
    out.mane_dynamical = m.dynamical;
    out.mane_analytic = m.analytic;
    out.value = std::min(out.tau_plus, out.mane_dynamical);
    return out;
}

/// The elementary estimate sqrt(2k) l <= kT + l^2/(2T) underlying the
/// comparison of the Taimanov and action functionals; equality at
/// T = l / sqrt(2k). Exposed for the property tests.
inline double action_length_gap(double ell, double T, double k) {
    return k * T + ell * ell / (2.0 * T) - std::sqrt(2.0 * k) * ell;
}

}  // namespace maglab
