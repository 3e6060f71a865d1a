#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

// Upper half-plane model of the hyperbolic plane: H = {(x,y) : y > 0} with
// metric (dx^2 + dy^2)/y^2, area form dx^dy/y^2 and orientation dx^dy.
// Isometries are real Moebius maps z -> (az+b)/(cz+d), ad-bc = 1.

namespace maglab {

using cplx = std::complex<double>;

struct domain_error_hp : std::domain_error {
    using std::domain_error::domain_error;
};

/// Point of the upper half-plane.
struct HPoint {
    double x = 0.0;
    double y = 1.0;

    cplx z() const { return {x, y}; }
    static HPoint from(cplx z) { return {z.real(), z.imag()}; }
};

inline void require_upper(const HPoint& p, const char* who) {
    if (!(p.y > 0.0))
        throw domain_error_hp(std::string(who) + ": point not in upper half-plane (y = " +
                              std::to_string(p.y) + ")");
}

/// Tangent vector attached to a base point.
struct TangentVec {
    HPoint base;
    double vx = 0.0;
    double vy = 0.0;

    cplx w() const { return {vx, vy}; }
};

/// Hyperbolic inner product of two vectors at the same base point.
inline double metric_inner(const TangentVec& u, const TangentVec& v) {
    require_upper(u.base, "metric_inner");
    return (u.vx * v.vx + u.vy * v.vy) / (u.base.y * u.base.y);
}

/// Hyperbolic norm sqrt(vx^2 + vy^2)/y.
inline double metric_norm(const TangentVec& v) {
    require_upper(v.base, "metric_norm");
    return std::hypot(v.vx, v.vy) / v.base.y;
}

/// Covector with components (cx, cy) meaning cx*dx + cy*dy at a point.
struct Covector {
    HPoint base;
    double cx = 0.0;
    double cy = 0.0;

    double pair(const TangentVec& v) const { return cx * v.vx + cy * v.vy; }
    /// Dual norm: y * |(cx, cy)|.
    double norm() const { return base.y * std::hypot(cx, cy); }
};

/// The bounded primitive s*dx/y of s times the hyperbolic area form.
/// Its dual norm equals |s| at every point.
inline Covector theta_primitive(const HPoint& p, double s) {
    require_upper(p, "theta_primitive");
    return Covector{p, s / p.y, 0.0};
}

/// Distance via acosh(1 + |p-q|^2 / (2 y_p y_q)).
inline double hyperbolic_distance(const HPoint& p, const HPoint& q) {
    require_upper(p, "hyperbolic_distance");
    require_upper(q, "hyperbolic_distance");
    const double dx = p.x - q.x, dy = p.y - q.y;
    const double u = (dx * dx + dy * dy) / (2.0 * p.y * q.y);
    // acosh(1+u) written with log1p for small u
    return std::log1p(u + std::sqrt(u * (u + 2.0)));
}

/// cosh of the distance; cheap, used for comparisons.
inline double cosh_distance(const HPoint& p, const HPoint& q) {
    const double dx = p.x - q.x, dy = p.y - q.y;
    return 1.0 + (dx * dx + dy * dy) / (2.0 * p.y * q.y);
}

/// Rotation by +90 degrees in the oriented metric sense. The metric is
/// conformal, so this is the Euclidean quarter turn: (vx,vy) -> (-vy,vx).
inline TangentVec rotate90(const TangentVec& v) {
    return TangentVec{v.base, -v.vy, v.vx};
}

/// Real Moebius map z -> (az+b)/(cz+d) with ad - bc = 1.
struct Isometry {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    static Isometry identity() { return {}; }

    /// Normalize the determinant to 1 (and make the trace sign canonical).
    Isometry normalized() const {
        double det = a * d - b * c;
        if (!(det > 0.0))
            throw domain_error_hp("Isometry: determinant must be positive");
        double s = 1.0 / std::sqrt(det);
        Isometry m{a * s, b * s, c * s, d * s};
        // PSL(2,R): fix the overall sign so comparisons are stable.
        if (m.a + m.d < 0.0 || (m.a + m.d == 0.0 && (m.a < 0.0 || (m.a == 0.0 && m.b < 0.0)))) {
            m.a = -m.a; m.b = -m.b; m.c = -m.c; m.d = -m.d;
        }
        return m;
    }

    double trace() const { return a + d; }

    HPoint apply(const HPoint& p) const {
        require_upper(p, "Isometry::apply");
        const cplx z = p.z();
        const cplx im = (a * z + b) / (c * z + d);
        return HPoint::from(im);
    }

    /// Derivative dz' = dz/(cz+d)^2; pushes tangent vectors forward.
    TangentVec apply(const TangentVec& v) const {
        const cplx z = v.base.z();
        const cplx den = c * z + d;
        const cplx dw = v.w() / (den * den);
        return TangentVec{apply(v.base), dw.real(), dw.imag()};
    }

    Isometry inverse() const { return Isometry{d, -b, -c, a}.normalized(); }

    friend Isometry operator*(const Isometry& g, const Isometry& h) {
        return Isometry{g.a * h.a + g.b * h.c, g.a * h.b + g.b * h.d,
                        g.c * h.a + g.d * h.c, g.c * h.b + g.d * h.d}
            .normalized();
    }

    /// Frobenius distance to +-identity, the natural PSL(2,R) residual.
    double residual_to_identity() const {
        auto frob = [&](double s) {
            double da = a - s, db = b, dc = c, dd = d - s;
            return std::sqrt(da * da + db * db + dc * dc + dd * dd);
        };
        return std::min(frob(1.0), frob(-1.0));
    }
};

// ---------------------------------------------------------------------------
// Half-plane <-> Poincare disk conversions (disk used for octagon building
// and for polar coordinates around a point).

/// Cayley map H -> D, i -> 0.
inline cplx to_disk(cplx z) { return (z - cplx(0, 1)) / (z + cplx(0, 1)); }
inline cplx from_disk(cplx w) { return cplx(0, 1) * (cplx(1, 0) + w) / (cplx(1, 0) - w); }

/// Moebius map sending p to i, translating along the x-direction then scaling.
inline Isometry center_at(const HPoint& p) {
    require_upper(p, "center_at");
    const double s = 1.0 / std::sqrt(p.y);
    return Isometry{s, -p.x * s, 0.0, p.y * s}.normalized();  // z -> (z - x)/y
}

/// Disk coordinate of q as seen from p (p maps to the disk center).
inline cplx disk_coord(const HPoint& q, const HPoint& p) {
    const Isometry g = center_at(p);
    return to_disk(g.apply(q).z());
}

/// Geodesic polar coordinates of q around p: (distance, angle).
inline std::pair<double, double> polar_around(const HPoint& q, const HPoint& p) {
    const cplx w = disk_coord(q, p);
    const double r = std::abs(w);
    return {2.0 * std::atanh(std::min(r, 1.0 - 1e-17)), std::arg(w)};
}

/// Point at hyperbolic distance d from p in disk-angle phi.
inline HPoint geodesic_polar_point(const HPoint& p, double d, double phi) {
    const cplx w = std::tanh(0.5 * d) * std::exp(cplx(0.0, phi));
    const Isometry g = center_at(p).inverse();
    return g.apply(HPoint::from(from_disk(w)));
}

/// Translation of length t along the oriented geodesic through p and q.
/// Maps p to the point at distance t toward q; for t = d(p,q) it maps p to q
/// and its derivative realizes parallel transport along the geodesic.
inline Isometry translation_along(const HPoint& p, const HPoint& q, double t) {
    const cplx w = disk_coord(q, p);
    const double phi = std::arg(w);
    // In the frame centered at p: rotate the axis to vertical, translate, rotate back.
    const double cs = std::cos(0.5 * phi), sn = std::sin(0.5 * phi);
    const Isometry rot{cs, sn, -sn, cs};      // rotation about i by +phi
    const Isometry rot_inv{cs, -sn, sn, cs};
    const Isometry trans{std::exp(0.5 * t), 0.0, 0.0, std::exp(-0.5 * t)};  // z -> e^t z
    const Isometry g0 = center_at(p);
    return (g0.inverse() * rot * trans * rot_inv * g0).normalized();
}

/// Parallel transport of v along the geodesic from v.base to q.
inline TangentVec parallel_transport(const TangentVec& v, const HPoint& q) {
    const double d = hyperbolic_distance(v.base, q);
    if (d < 1e-15) return TangentVec{q, v.vx, v.vy};
    const Isometry g = translation_along(v.base, q, d);
    TangentVec w = g.apply(v);
    w.base = q;  // kill the last-digit drift of the mapped base point
    return w;
}

}  // namespace maglab
