#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maglab/flux.hpp"
#include "maglab/loop.hpp"

// Free-period action functional on discretized loops:
//   S_k(x, T) = N/(2T) sum_i c_i |x_{i+1} - x_i|^2 + k T + Flux(x)
// with c_i the trapezoidal conformal factor (y_i^-2 + y_{i+1}^-2)/2. The
// flux term is the capping-disc flux for contractible loops and the
// accumulated cylinder flux from the class reference otherwise. Gradients
// are the exact derivatives of this discrete functional.

namespace maglab {

struct ActionOptions {
    int fan_depth = 1;        // quadrature subdivision for flux terms
    double rebase_distance = 0.05;  // max drift of a non-contractible loop from its snapshot
};

struct ActionReport {
    double kinetic = 0.0;    // N/(2T) sum c |dx|^2
    double period_term = 0.0;  // k T
    double flux = 0.0;
    double total = 0.0;
    double dSdT = 0.0;       // k - kinetic / T
    double grad_norm = 0.0;
    std::string cls;
};

struct ActionGradient {
    std::vector<double> gx, gy;
    double gT = 0.0;

    double norm() const {
        double s = gT * gT;
        for (size_t i = 0; i < gx.size(); ++i) s += gx[i] * gx[i] + gy[i] * gy[i];
        return std::sqrt(s);
    }
    /// Scale-free norm used for convergence checks: the point block is
    /// averaged so refinement in N does not inflate the measure.
    double mean_norm() const {
        double s = 0.0;
        for (size_t i = 0; i < gx.size(); ++i) s += gx[i] * gx[i] + gy[i] * gy[i];
        return std::sqrt(s / static_cast<double>(gx.size()) + gT * gT);
    }
};

namespace detail {

inline double kinetic_sum(const LoopPath& loop, const FuchsianGenus2* G) {
    const int N = loop.n();
    const HPoint pN = closing_point(loop, G);
    double K = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint& a = loop.pts[i];
        const HPoint& b = (i + 1 < N) ? loop.pts[i + 1] : pN;
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double c = 0.5 * (1.0 / (a.y * a.y) + 1.0 / (b.y * b.y));
        K += c * (dx * dx + dy * dy);
    }
    return K;
}

}  // namespace detail

/// Flux part of the action. Contractible loops cap a disc; loops in a
/// nontrivial class must carry their cylinder-flux record.
inline double loop_flux(const LoopPath& loop, const MagneticSystem& sys,
                        const ActionOptions& opt = {}) {
    if (loop.contractible()) return fan_flux(loop.pts, sys, opt.fan_depth);
    if (!loop.has_cyl_flux)
        throw convention_error(
            "loop_flux: non-contractible loop without a reference homotopy record (class " +
            class_key(loop.cls) + ")");
    const Isometry W = closing_map(loop, sys.group);
    return loop.cyl_flux +
           panel_flux(loop.snapshot, loop.pts, W, false, sys, opt.fan_depth);
}

inline ActionReport action_Sk(const LoopPath& loop, const MagneticSystem& sys, double k,
                              const ActionOptions& opt = {}, bool with_gradient = false);

/// Exact gradient of the discrete functional (points and period).
inline ActionGradient action_gradient(const LoopPath& loop, const MagneticSystem& sys, double k,
                                      const ActionOptions& opt = {}) {
    check_loop(loop);
    const int N = loop.n();
    const FuchsianGenus2* G = sys.group;
    const Isometry W = closing_map(loop, G);
    const HPoint pN = closing_point(loop, G);
    ActionGradient grad;
    grad.gx.assign(N, 0.0);
    grad.gy.assign(N, 0.0);

    // kinetic part: N/(2T) sum c_i |d_i|^2
    const double pref = N / (2.0 * loop.T);
    double K = 0.0;
    double jr = 1.0, ji = 0.0;
    if (!loop.contractible()) {
        const cplx z = loop.pts[0].z();
        const cplx der = 1.0 / ((W.c * z + W.d) * (W.c * z + W.d));
        jr = der.real();
        ji = der.imag();
    }
    auto add_pt = [&](int idx, double dx, double dy) {
        if (idx < N) {
            grad.gx[idx] += dx;
            grad.gy[idx] += dy;
        } else {
            grad.gx[0] += jr * dx + ji * dy;
            grad.gy[0] += -ji * dx + jr * dy;
        }
    };
    for (int i = 0; i < N; ++i) {
        const HPoint& a = loop.pts[i];
        const HPoint b = (i + 1 < N) ? loop.pts[i + 1] : pN;
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double d2 = dx * dx + dy * dy;
        const double c = 0.5 * (1.0 / (a.y * a.y) + 1.0 / (b.y * b.y));
        K += c * d2;
        // d/da and d/db of c_i |d_i|^2
        add_pt(i, pref * (-2.0 * c * dx), pref * (-2.0 * c * dy - d2 / (a.y * a.y * a.y)));
        add_pt(i + 1, pref * (2.0 * c * dx), pref * (2.0 * c * dy - d2 / (b.y * b.y * b.y)));
    }

    // flux part
    std::vector<double> fx, fy;
    if (loop.contractible()) {
        fan_flux_grad(loop.pts, sys, opt.fan_depth, fx, fy);
    } else {
        if (!loop.has_cyl_flux)
            throw convention_error("action_gradient: missing reference homotopy record");
        panel_flux_grad_B(loop.snapshot, loop.pts, W, false, sys, opt.fan_depth, fx, fy);
    }
    for (int i = 0; i < N; ++i) {
        grad.gx[i] += fx[i];
        grad.gy[i] += fy[i];
    }

    grad.gT = k - pref * K / loop.T;  // = k - N K / (2 T^2)
    return grad;
}

inline ActionReport action_Sk(const LoopPath& loop, const MagneticSystem& sys, double k,
                              const ActionOptions& opt, bool with_gradient) {
    check_loop(loop);
    ActionReport rep;
    const double K = detail::kinetic_sum(loop, sys.group);
    rep.kinetic = loop.n() * K / (2.0 * loop.T);
    rep.period_term = k * loop.T;
    rep.flux = loop_flux(loop, sys, opt);
    rep.total = rep.kinetic + rep.period_term + rep.flux;
    rep.dSdT = k - rep.kinetic / loop.T;
    rep.cls = loop.contractible() ? "0" : class_key(loop.cls);
    if (with_gradient) rep.grad_norm = action_gradient(loop, sys, k, opt).norm();
    return rep;
}

/// Value-only fast path used inside optimizers.
inline double action_value(const LoopPath& loop, const MagneticSystem& sys, double k,
                           const ActionOptions& opt = {}) {
    const double K = detail::kinetic_sum(loop, sys.group);
    return loop.n() * K / (2.0 * loop.T) + k * loop.T + loop_flux(loop, sys, opt);
}

/// Fold the live panel of a non-contractible loop into its stored cylinder
/// flux. Call whenever the loop drifted away from its snapshot.
inline void rebase_flux(LoopPath& loop, const MagneticSystem& sys, const ActionOptions& opt = {}) {
    if (loop.contractible()) return;
    if (!loop.has_cyl_flux) throw convention_error("rebase_flux: no reference record");
    const Isometry W = closing_map(loop, sys.group);
    loop.cyl_flux += panel_flux(loop.snapshot, loop.pts, W, false, sys, opt.fan_depth);
    loop.snapshot = loop.pts;
}

inline double snapshot_drift(const LoopPath& loop) {
    if (loop.contractible() || loop.snapshot.empty()) return 0.0;
    double worst = 0.0;
    for (int i = 0; i < loop.n(); ++i)
        worst = std::max(worst, hyperbolic_distance(loop.pts[i], loop.snapshot[i]));
    return worst;
}

// ---------------------------------------------------------------------------
// Homotopy flux and the reference-loop convention.

/// Signed flux of sigma over the cylinder swept by a fine homotopy
/// loops[0] -> loops[m-1]; additive under concatenation of homotopies.
inline double flux_of_homotopy(const std::vector<std::vector<HPoint>>& loops, const Isometry& W,
                               bool contractible, const MagneticSystem& sys, double mesh_bound,
                               int depth = 2) {
    if (loops.size() < 2) return 0.0;
    double acc = 0.0;
    for (size_t j = 0; j + 1 < loops.size(); ++j) {
        const auto& A = loops[j];
        const auto& B = loops[j + 1];
        if (A.size() != B.size())
            throw refinement_error("flux_of_homotopy: loops must share the discretization");
        for (size_t i = 0; i < A.size(); ++i)
            if (hyperbolic_distance(A[i], B[i]) > mesh_bound)
                throw refinement_error("flux_of_homotopy: consecutive loops exceed the mesh bound");
        acc += panel_flux(A, B, W, contractible, sys, depth);
    }
    return acc;
}

/// Convenience overload for whole LoopPaths in the same class.
inline double flux_of_homotopy(const std::vector<LoopPath>& loops, const MagneticSystem& sys,
                               double mesh_bound = 0.5, int depth = 2) {
    if (loops.size() < 2) return 0.0;
    const std::string key = class_key(loops.front().cls);
    for (const auto& l : loops)
        if (class_key(l.cls) != key)
            throw convention_error("flux_of_homotopy: loops must be in the same class");
    std::vector<std::vector<HPoint>> pts;
    pts.reserve(loops.size());
    for (const auto& l : loops) pts.push_back(l.pts);
    const Isometry W = closing_map(loops.front(), sys.group);
    return flux_of_homotopy(pts, W, loops.front().contractible(), sys, mesh_bound, depth);
}

/// Straight-line homotopy record from a reference loop: sets the cylinder
/// flux of `loop` relative to `ref` (same class, same N). The number of
/// intermediate layers is chosen from the mesh bound.
inline void attach_reference(LoopPath& loop, const LoopPath& ref, const MagneticSystem& sys,
                             double mesh_bound = 0.25, int depth = 2) {
    if (class_key(loop.cls) != class_key(ref.cls))
        throw convention_error("attach_reference: class mismatch");
    if (loop.n() != ref.n())
        throw convention_error("attach_reference: discretization mismatch");
    double worst = 0.0;
    for (int i = 0; i < loop.n(); ++i)
        worst = std::max(worst, hyperbolic_distance(loop.pts[i], ref.pts[i]));
    const int layers = std::max(1, static_cast<int>(std::ceil(worst / mesh_bound)));
    std::vector<std::vector<HPoint>> homotopy;
    homotopy.reserve(layers + 1);
    for (int s = 0; s <= layers; ++s) {
        const double lam = static_cast<double>(s) / layers;
        std::vector<HPoint> layer(loop.n());
        for (int i = 0; i < loop.n(); ++i)
            layer[i] = HPoint{ref.pts[i].x + lam * (loop.pts[i].x - ref.pts[i].x),
                              ref.pts[i].y + lam * (loop.pts[i].y - ref.pts[i].y)};
        homotopy.push_back(std::move(layer));
    }
    const Isometry W = closing_map(loop, sys.group);
    loop.cyl_flux =
        flux_of_homotopy(homotopy, W, loop.contractible(), sys, mesh_bound * 1.01, depth);
    loop.snapshot = loop.pts;
    loop.has_cyl_flux = true;
    loop.reference_id = ref.reference_id;
}

/// Registry of reference loops per free homotopy class. References are
/// chosen so the iteration constants b(nu, n) vanish: the constant loop for
/// the trivial class, the n-th iterate of the class reference for nu^n.
struct ActionConvention {
    std::map<std::string, LoopPath> refs;

    void register_reference(LoopPath ref, const std::string& id) {
        ref.reference_id = id;
        ref.cyl_flux = 0.0;
        ref.has_cyl_flux = true;
        ref.snapshot = ref.pts;
        refs[class_key(ref.cls)] = std::move(ref);
    }

    const LoopPath* find(const DeckWord& cls) const {
        auto it = refs.find(class_key(cls));
        return it == refs.end() ? nullptr : &it->second;
    }

    /// Reference for the n-th iterate class, derived from the base one.
    LoopPath iterate_reference(const DeckWord& cls, int n, const FuchsianGenus2* G) const {
        const LoopPath* base = find(cls);
        if (base == nullptr) throw convention_error("iterate_reference: unregistered class");
        return iterate_loop(*base, n, G);
    }
};

// ---------------------------------------------------------------------------
// Taimanov functional on embedded regions.

struct TaimanovRegion {
    enum class Kind { empty, whole_surface, disc, annulus };
    Kind kind = Kind::empty;
    /// Oriented boundary polylines (outer counterclockwise, inner clockwise
    /// for an annulus). Unparametrized: only the point sets matter.
    std::vector<std::vector<HPoint>> boundaries;

    static TaimanovRegion empty_region() { return {}; }
    static TaimanovRegion whole(const FuchsianGenus2& G) {
        TaimanovRegion r;
        r.kind = Kind::whole_surface;
        (void)G;
        return r;
    }
    static TaimanovRegion disc(std::vector<HPoint> boundary) {
        TaimanovRegion r;
        r.kind = Kind::disc;
        r.boundaries.push_back(std::move(boundary));
        return r;
    }
    static TaimanovRegion annulus(std::vector<HPoint> outer, std::vector<HPoint> inner) {
        TaimanovRegion r;
        r.kind = Kind::annulus;
        r.boundaries.push_back(std::move(outer));
        r.boundaries.push_back(std::move(inner));
        return r;
    }
};

namespace detail {

inline bool segments_intersect(const HPoint& a, const HPoint& b, const HPoint& c,
                               const HPoint& d) {
    auto orient = [](const HPoint& p, const HPoint& q, const HPoint& r) {
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    };
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

inline void check_embedded(const std::vector<std::vector<HPoint>>& loops) {
    for (size_t l = 0; l < loops.size(); ++l) {
        const auto& P = loops[l];
        const int n = static_cast<int>(P.size());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;  // adjacent through the wrap
                if (segments_intersect(P[i], P[(i + 1) % n], P[j], P[(j + 1) % n]))
                    throw std::invalid_argument("taimanov_Tk: boundary self-intersects");
            }
        }
        for (size_t m = l + 1; m < loops.size(); ++m) {
            const auto& Q = loops[m];
            const int nq = static_cast<int>(Q.size());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < nq; ++j)
                    if (segments_intersect(P[i], P[(i + 1) % n], Q[j], Q[(j + 1) % nq]))
                        throw std::invalid_argument("taimanov_Tk: boundary components intersect");
        }
    }
}

/// Octagon boundary as a polyline of geodesic sides (for the whole-surface
/// flux quadrature).
inline std::vector<HPoint> octagon_polyline(const FuchsianGenus2& G, int per_side) {
    std::vector<HPoint> pts;
    pts.reserve(8 * per_side);
    const double R = G.circumradius;
    for (int v = 0; v < 8; ++v) {
        const double phi0 = (2 * v + 1) * std::numbers::pi / 8.0;
        const double phi1 = (2 * v + 3) * std::numbers::pi / 8.0;
        const HPoint a = geodesic_polar_point(G.center, R, phi0);
        const HPoint b = geodesic_polar_point(G.center, R, phi1);
        const double d = hyperbolic_distance(a, b);
        for (int i = 0; i < per_side; ++i)
            pts.push_back(translation_along(a, b, d * i / per_side).apply(a));
    }
    return pts;
}

}  // namespace detail

/// Taimanov functional: sqrt(2k) * (boundary length) + flux over the region.
inline double taimanov_Tk(const TaimanovRegion& region, const MagneticSystem& sys, double k,
                          int depth = 3) {
    using Kind = TaimanovRegion::Kind;
    switch (region.kind) {
        case Kind::empty:
            return 0.0;
        case Kind::whole_surface: {
            if (sys.group == nullptr)
                throw std::invalid_argument("taimanov_Tk: whole surface needs a group");
            const auto poly = detail::octagon_polyline(*sys.group, 48);
            return fan_flux(poly, sys, depth);  // no boundary on the closed surface
        }
        case Kind::disc:
        case Kind::annulus: {
            detail::check_embedded(region.boundaries);
            double len = 0.0, flux = 0.0;
            for (const auto& b : region.boundaries) {
                const int n = static_cast<int>(b.size());
                for (int i = 0; i < n; ++i)
                    len += hyperbolic_distance(b[i], b[(i + 1) % n]);
                flux += fan_flux(b, sys, depth);
            }
            return std::sqrt(2.0 * k) * len + flux;
        }
    }
    return 0.0;
}

}  // namespace maglab
