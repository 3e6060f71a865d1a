#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "maglab/fuchsian.hpp"
#include "maglab/geometry.hpp"
#include "maglab/quadrature.hpp"

// Magnetic 2-form sigma = f * mu on the genus-2 surface, with mu the
// hyperbolic area form. Two families:
//   constant:    f == s
//   oscillating: f(p) = s * (1 - A * bump(d(p, p0)/rho)), A > 1, so f is
//                negative near p0 while the total flux stays positive. The
//                bump support must stay inside the fundamental octagon so
//                the G-periodic extension is smooth.

namespace maglab {

enum class FieldKind { constant, oscillating };

/// Smooth compactly supported profile: exp(1 - 1/(1-u^2)) on |u|<1, else 0.
/// bump(0) = 1 and all derivatives vanish at |u| = 1.
inline double bump_profile(double u) {
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - u2));
}

inline double bump_profile_deriv(double u) {
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    const double den = 1.0 - u2;
    return bump_profile(u) * (-2.0 * u / (den * den));
}

struct MagneticSystem {
    double strength = 1.0;                    // signed scale s
    FieldKind kind = FieldKind::constant;
    double bump_amplitude = 2.0;              // A (> 1 for an oscillating field)
    double bump_radius = 1.0;                 // rho
    HPoint bump_center{0.0, 1.0};             // p0; defaults to the octagon center
    double energy = 0.3;                      // context energy k
    /// Lorentz sign: covariant acceleration = lorentz_sign * f * J(v).
    /// Default -1: for f > 0 orbits turn clockwise (to the right of v),
    /// which makes critical points of the action the flow orbits with the
    /// traversal-oriented capping-disc flux convention used throughout.
    double lorentz_sign = -1.0;

    const FuchsianGenus2* group = nullptr;    // optional; enables G-periodicity

    static MagneticSystem constant(double s, double k) {
        MagneticSystem sys;
        sys.strength = s;
        sys.kind = FieldKind::constant;
        sys.energy = k;
        return sys;
    }

    static MagneticSystem oscillating(double s, double k, double A = 2.0, double rho = 1.0,
                                      HPoint p0 = HPoint{0.0, 1.0}) {
        MagneticSystem sys;
        sys.strength = s;
        sys.kind = FieldKind::oscillating;
        sys.energy = k;
        sys.bump_amplitude = A;
        sys.bump_radius = rho;
        sys.bump_center = p0;
        return sys;
    }

    bool oscillates() const { return kind == FieldKind::oscillating && bump_amplitude > 1.0; }

    /// Field density as a function of the distance to the bump center.
    double density_radial(double d) const {
        if (kind == FieldKind::constant) return strength;
        return strength * (1.0 - bump_amplitude * bump_profile(d / bump_radius));
    }

    double density_radial_deriv(double d) const {
        if (kind == FieldKind::constant) return 0.0;
        return -strength * bump_amplitude * bump_profile_deriv(d / bump_radius) / bump_radius;
    }

    double min_density() const {
        return kind == FieldKind::constant ? strength
                                           : strength * (1.0 - bump_amplitude);
    }

    /// Point where the minimum is attained (the registered minimum).
    HPoint min_point() const { return bump_center; }
};

namespace detail {

inline HPoint surface_representative(const HPoint& p, const MagneticSystem& sys) {
    if (sys.group == nullptr) return p;
    return reduce_to_domain(p, *sys.group).first;
}

}  // namespace detail

/// Density f of sigma = f * mu at a point (G-periodic when a group is set).
inline double sigma_density(const HPoint& p, const MagneticSystem& sys) {
    if (sys.kind == FieldKind::constant) return sys.strength;
    const HPoint q = detail::surface_representative(p, sys);
    return sys.density_radial(hyperbolic_distance(q, sys.bump_center));
}

/// Euclidean-chart gradient of f at p (for quadrature of the flux form).
inline std::pair<double, double> sigma_density_grad(const HPoint& p, const MagneticSystem& sys) {
    if (sys.kind == FieldKind::constant) return {0.0, 0.0};
    HPoint q = p;
    Isometry back = Isometry::identity();
    if (sys.group != nullptr) {
        auto [qq, word] = reduce_to_domain(p, *sys.group);
        q = qq;
        back = sys.group->word(word);
    }
    const HPoint c = sys.bump_center;
    const double d = hyperbolic_distance(q, c);
    const double fr = sys.density_radial_deriv(d);
    if (fr == 0.0 || d < 1e-14) return {0.0, 0.0};
    // d = acosh(1 + Q/(2 y yc)), Q = (x-xc)^2 + (y-yc)^2.
    const double dx = q.x - c.x, dy = q.y - c.y;
    const double Q = dx * dx + dy * dy;
    const double u = 1.0 + Q / (2.0 * q.y * c.y);
    const double denom = std::sqrt(std::max(u * u - 1.0, 1e-300));
    const double du_dx = dx / (q.y * c.y);
    const double du_dy = (2.0 * dy * q.y - Q) / (2.0 * q.y * q.y * c.y);
    double gx = fr * du_dx / denom;
    double gy = fr * du_dy / denom;
    if (sys.group != nullptr) {
        // chain rule through the reducing word: grad_p (f o W) = J_W^T grad f(Wp)
        const cplx z = p.z();
        const cplx der = 1.0 / ((back.c * z + back.d) * (back.c * z + back.d));
        const double jr = der.real(), ji = der.imag();
        // J = [[jr, -ji], [ji, jr]] (complex multiplication), so J^T grad:
        const double tx = jr * gx + ji * gy;
        const double ty = -ji * gx + jr * gy;
        gx = tx;
        gy = ty;
    }
    return {gx, gy};
}

// ---------------------------------------------------------------------------
// Radial integrals around the bump center (the field is rotationally
// symmetric there, which gives cheap exact-grade quadrature).

/// Flux of sigma over the geodesic disc of radius r centered at the bump
/// center: 2 pi * integral_0^r f(u) sinh(u) du.
inline double radial_disc_flux(const MagneticSystem& sys, double r) {
    if (sys.kind == FieldKind::constant)
        return sys.strength * 2.0 * std::numbers::pi * (std::cosh(r) - 1.0);
    const double base = sys.strength * 2.0 * std::numbers::pi * (std::cosh(r) - 1.0);
    const double rb = std::min(r, sys.bump_radius);
    const double dip = integrate_gl(
        [&](double u) { return bump_profile(u / sys.bump_radius) * std::sinh(u); }, 0.0, rb, 40);
    return base - sys.strength * sys.bump_amplitude * 2.0 * std::numbers::pi * dip;
}

/// Total flux of sigma over the surface (area of the octagon is 4 pi).
inline double total_flux(const MagneticSystem& sys) {
    const double area = 4.0 * std::numbers::pi;
    if (sys.kind == FieldKind::constant) return sys.strength * area;
    const double dip = integrate_gl(
        [&](double u) { return bump_profile(u / sys.bump_radius) * std::sinh(u); }, 0.0,
        sys.bump_radius, 40);
    return sys.strength * (area - sys.bump_amplitude * 2.0 * std::numbers::pi * dip);
}

/// Gauss-Bonnet normalization a_sigma = (total flux) / (2 pi chi(M)), with
/// chi = -2 for genus two. Negative when the total flux is positive.
inline double gauss_bonnet_ratio(const MagneticSystem& sys) {
    return total_flux(sys) / (2.0 * std::numbers::pi * (-2.0));
}

/// Radial potential for the Liouville-action 1-form: beta = B(d) dphi with
/// B(d) = integral_0^d (f(u) + a_sigma) sinh(u) du, so that
/// d beta = (f + a_sigma) mu = sigma - a_sigma * (K mu) near the bump center.
inline double beta_radial_potential(const MagneticSystem& sys, double d) {
    const double a_sigma = gauss_bonnet_ratio(sys);
    if (sys.kind == FieldKind::constant)
        return (sys.strength + a_sigma) * (std::cosh(d) - 1.0);
    return radial_disc_flux(sys, d) / (2.0 * std::numbers::pi) +
           a_sigma * (std::cosh(d) - 1.0);
}

/// Covector value of beta at p: B(d) dphi in polar coordinates around the
/// bump center. Valid on any disc around the center that avoids the other
/// translates of the bump.
inline Covector beta_covector(const HPoint& p, const MagneticSystem& sys) {
    const HPoint c = sys.bump_center;
    const auto [d, phi] = polar_around(p, c);
    if (d < 1e-12) return Covector{p, 0.0, 0.0};
    const double B = beta_radial_potential(sys, d);
    // dphi in the chart: phi = arg(xi(z)) with xi the disk coordinate around c;
    // grad of arg is Im(xi'/xi) paired with dz.
    const Isometry g = center_at(c);
    const cplx z = p.z();
    const cplx den = g.c * z + g.d;
    const cplx zq = (g.a * z + g.b) / den;
    const cplx xi = to_disk(zq);
    const cplx dxi_dz = (1.0 / (den * den)) * (2.0 * cplx(0, 1) / ((zq + cplx(0, 1)) * (zq + cplx(0, 1))));
    const cplx ratio = dxi_dz / xi;
    // d(arg xi) = Im(dxi/xi) = Im(ratio * dz) = ratio_i * dx + ratio_r * dy
    return Covector{p, B * ratio.imag(), B * ratio.real()};
}

/// Sanity checks of the oscillating invariants (min f < 0 < total flux).
inline void validate(const MagneticSystem& sys) {
    if (!(sys.energy > 0.0)) throw std::invalid_argument("MagneticSystem: energy must be > 0");
    if (sys.kind == FieldKind::oscillating) {
        if (!(sys.bump_radius > 0.0))
            throw std::invalid_argument("MagneticSystem: bump_radius must be > 0");
        if (sys.oscillates() && !(total_flux(sys) > 0.0))
            throw std::invalid_argument(
                "MagneticSystem: oscillating field must keep positive total flux");
    }
}

}  // namespace maglab
