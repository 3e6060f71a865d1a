#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "maglab/field.hpp"
#include "maglab/geometry.hpp"
#include "maglab/loop.hpp"
#include "maglab/quadrature.hpp"

// Flux of sigma = f * mu over 2-chains in the half-plane chart. Regions are
// bounded by straight chart segments; the integrand is the chart density
// F(p) = f(p)/y^2. Quadrature triangles are subdivided uniformly so values
// and exact gradients of the discrete functional are cheap to evaluate.

namespace maglab {

struct refinement_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline double chart_density(const HPoint& p, const MagneticSystem& sys) {
    return sigma_density(p, sys) / (p.y * p.y);
}

inline std::pair<double, double> chart_density_grad(const HPoint& p, const MagneticSystem& sys) {
    const double f = sigma_density(p, sys);
    const auto [fx, fy] = sigma_density_grad(p, sys);
    const double y2 = p.y * p.y;
    return {fx / y2, fy / y2 - 2.0 * f / (y2 * p.y)};
}

}  // namespace detail

/// Signed flux over the straight-edge triangle (P0, P1, P2).
inline double tri_flux(const HPoint& P0, const HPoint& P1, const HPoint& P2,
                       const MagneticSystem& sys, const std::vector<TriNode>& rule) {
    const double ux = P1.x - P0.x, uy = P1.y - P0.y;
    const double vx = P2.x - P0.x, vy = P2.y - P0.y;
    const double D = ux * vy - uy * vx;
    if (D == 0.0) return 0.0;
    double S = 0.0;
    for (const auto& n : rule) {
        const HPoint p{P0.x + n.xi * ux + n.eta * vx, P0.y + n.xi * uy + n.eta * vy};
        S += n.w * detail::chart_density(p, sys);
    }
    return D * S;  // rule weights sum to the reference area 1/2
}

struct TriFluxGrad {
    double value;
    double g[3][2];  // d/d(P0..P2).(x,y)
};

inline TriFluxGrad tri_flux_grad(const HPoint& P0, const HPoint& P1, const HPoint& P2,
                                 const MagneticSystem& sys, const std::vector<TriNode>& rule) {
    const double ux = P1.x - P0.x, uy = P1.y - P0.y;
    const double vx = P2.x - P0.x, vy = P2.y - P0.y;
    const double D = ux * vy - uy * vx;
    TriFluxGrad out{};
    double S = 0.0;
    double SgP0x = 0.0, SgP0y = 0.0, SgP1x = 0.0, SgP1y = 0.0, SgP2x = 0.0, SgP2y = 0.0;
    for (const auto& n : rule) {
        const HPoint p{P0.x + n.xi * ux + n.eta * vx, P0.y + n.xi * uy + n.eta * vy};
        const double F = detail::chart_density(p, sys);
        const auto [Fx, Fy] = detail::chart_density_grad(p, sys);
        S += n.w * F;
        const double l0 = 1.0 - n.xi - n.eta;
        SgP0x += n.w * Fx * l0;
        SgP0y += n.w * Fy * l0;
        SgP1x += n.w * Fx * n.xi;
        SgP1y += n.w * Fy * n.xi;
        SgP2x += n.w * Fx * n.eta;
        SgP2y += n.w * Fy * n.eta;
    }
    out.value = D * S;
    // dD/dP terms
    const double dD[3][2] = {{P1.y - P2.y, P2.x - P1.x},
                             {P2.y - P0.y, P0.x - P2.x},
                             {P0.y - P1.y, P1.x - P0.x}};
    const double Sg[3][2] = {{SgP0x, SgP0y}, {SgP1x, SgP1y}, {SgP2x, SgP2y}};
    for (int v = 0; v < 3; ++v)
        for (int c = 0; c < 2; ++c) out.g[v][c] = dD[v][c] * S + D * Sg[v][c];
    return out;
}

/// Flux of the capping disc of a closed contractible polyline, via the fan
/// triangulation from the first vertex. Signed by the traversal orientation.
inline double fan_flux(const std::vector<HPoint>& pts, const MagneticSystem& sys,
                       int depth = 1) {
    const auto rule = tri_rule_subdivided(depth);
    const int N = static_cast<int>(pts.size());
    double acc = 0.0;
    for (int i = 1; i + 1 < N; ++i) acc += tri_flux(pts[0], pts[i], pts[i + 1], sys, rule);
    return acc;
}

/// Fan flux together with its exact gradient in the vertex coordinates.
inline double fan_flux_grad(const std::vector<HPoint>& pts, const MagneticSystem& sys, int depth,
                            std::vector<double>& gx, std::vector<double>& gy) {
    const auto rule = tri_rule_subdivided(depth);
    const int N = static_cast<int>(pts.size());
    gx.assign(N, 0.0);
    gy.assign(N, 0.0);
    double acc = 0.0;
    for (int i = 1; i + 1 < N; ++i) {
        const TriFluxGrad t = tri_flux_grad(pts[0], pts[i], pts[i + 1], sys, rule);
        acc += t.value;
        gx[0] += t.g[0][0];
        gy[0] += t.g[0][1];
        gx[i] += t.g[1][0];
        gy[i] += t.g[1][1];
        gx[i + 1] += t.g[2][0];
        gy[i + 1] += t.g[2][1];
    }
    return acc;
}

/// Flux of the cylinder swept from loop A to loop B (same class, same N),
/// oriented so that boundary = B - A. Closing points follow the class map W.
inline double panel_flux(const std::vector<HPoint>& A, const std::vector<HPoint>& B,
                         const Isometry& W, bool contractible, const MagneticSystem& sys,
                         int depth = 1) {
    if (A.size() != B.size())
        throw std::invalid_argument("panel_flux: loops must share the discretization");
    const auto rule = tri_rule_subdivided(depth);
    const int N = static_cast<int>(A.size());
    auto closed = [&](const std::vector<HPoint>& P, int i) {
        if (i < N) return P[i];
        return contractible ? P[0] : W.apply(P[0]);
    };
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint a0 = A[i], a1 = closed(A, i + 1);
        const HPoint b0 = B[i], b1 = closed(B, i + 1);
        acc += tri_flux(a0, b0, b1, sys, rule);
        acc += tri_flux(a0, b1, a1, sys, rule);
    }
    return acc;
}

/// Panel flux plus its gradient with respect to the B loop (A held fixed).
inline double panel_flux_grad_B(const std::vector<HPoint>& A, const std::vector<HPoint>& B,
                                const Isometry& W, bool contractible, const MagneticSystem& sys,
                                int depth, std::vector<double>& gx, std::vector<double>& gy) {
    if (A.size() != B.size())
        throw std::invalid_argument("panel_flux: loops must share the discretization");
    const auto rule = tri_rule_subdivided(depth);
    const int N = static_cast<int>(A.size());
    gx.assign(N, 0.0);
    gy.assign(N, 0.0);
    auto closed = [&](const std::vector<HPoint>& P, int i) {
        if (i < N) return P[i];
        return contractible ? P[0] : W.apply(P[0]);
    };
    // chain rule for B_N = W(B_0)
    double jr = 1.0, ji = 0.0;
    if (!contractible) {
        const cplx z = B[0].z();
        const cplx der = 1.0 / ((W.c * z + W.d) * (W.c * z + W.d));
        jr = der.real();
        ji = der.imag();
    }
    auto add_B = [&](int idx, double dx, double dy) {
        if (idx < N) {
            gx[idx] += dx;
            gy[idx] += dy;
        } else {  // pull back through W' (complex multiplication jacobian)
            gx[0] += jr * dx + ji * dy;
            gy[0] += -ji * dx + jr * dy;
        }
    };
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint a0 = A[i], a1 = closed(A, i + 1);
        const HPoint b0 = B[i], b1 = closed(B, i + 1);
        const TriFluxGrad t1 = tri_flux_grad(a0, b0, b1, sys, rule);
        const TriFluxGrad t2 = tri_flux_grad(a0, b1, a1, sys, rule);
        acc += t1.value + t2.value;
        add_B(i, t1.g[1][0], t1.g[1][1]);
        add_B(i + 1, t1.g[2][0] + t2.g[1][0], t1.g[2][1] + t2.g[1][1]);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Validation route: line integral of an explicit primitive along the same
// straight-segment boundary. theta = s dx/y plus, for the oscillating
// family, the radial potential of the bump dip around the bump center.
// Valid when the loop stays clear of the other translates of the bump
// support (always true without a group attached).

namespace detail {

/// Integral of dx/y along the straight segment p -> q (closed form).
inline double segment_dx_over_y(const HPoint& p, const HPoint& q) {
    const double dx = q.x - p.x, dy = q.y - p.y;
    if (std::abs(dy) > 1e-8 * std::max(p.y, q.y)) return dx * std::log(q.y / p.y) / dy;
    const double r = dy / p.y;
    return dx / p.y * (1.0 - 0.5 * r + r * r / 3.0);
}

/// Radial potential of the dip part (f - s): W_dip(d) = -s A int bump sinh.
inline double dip_potential(const MagneticSystem& sys, double d) {
    if (sys.kind == FieldKind::constant) return 0.0;
    const double rb = std::min(d, sys.bump_radius);
    const double val = integrate_gl(
        [&](double u) { return bump_profile(u / sys.bump_radius) * std::sinh(u); }, 0.0, rb, 32);
    return -sys.strength * sys.bump_amplitude * val;
}

}  // namespace detail

/// Disc flux of a closed contractible polyline by the primitive route.
inline double boundary_primitive_flux(const std::vector<HPoint>& pts, const MagneticSystem& sys,
                                      int gl_nodes = 24) {
    const int N = static_cast<int>(pts.size());
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint p = pts[i];
        const HPoint q = pts[(i + 1) % N];
        acc += sys.strength * detail::segment_dx_over_y(p, q);
    }
    if (sys.kind != FieldKind::oscillating) return acc;
    if (sys.group != nullptr) {
        // the explicit primitive only covers the central bump copy
        for (const auto& p : pts)
            if (hyperbolic_distance(p, sys.group->center) >
                2.0 * sys.group->apothem - sys.bump_radius)
                throw std::invalid_argument(
                    "boundary_primitive_flux: loop leaves the validity disc of the primitive");
    }
    const HPoint c = sys.bump_center;
    const Isometry g0 = center_at(c);
    const GLRule rule = gauss_legendre01(gl_nodes);
    for (int i = 0; i < N; ++i) {
        const cplx zp = pts[i].z();
        const cplx zq = pts[(i + 1) % N].z();
        const cplx dz = zq - zp;
        double seg = 0.0;
        for (size_t j = 0; j < rule.x.size(); ++j) {
            const cplx z = zp + rule.x[j] * dz;
            const cplx den = g0.c * z + g0.d;
            const cplx zc = (g0.a * z + g0.b) / den;          // centered frame
            const cplx xi = to_disk(zc);
            if (std::abs(xi) < 1e-14) continue;               // at the center dphi is singular but W_dip ~ d^2
            const cplx dxi = (2.0 * cplx(0, 1) / ((zc + cplx(0, 1)) * (zc + cplx(0, 1)))) / (den * den);
            const double dphi_dt = (dxi * dz / xi).imag();
            const double d = 2.0 * std::atanh(std::min(std::abs(xi), 1.0 - 1e-17));
            seg += rule.w[j] * detail::dip_potential(sys, d) * dphi_dt;
        }
        acc += seg;
    }
    return acc;
}

}  // namespace maglab
