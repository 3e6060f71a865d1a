#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maglab/dynamics.hpp"
#include "maglab/fuchsian.hpp"
#include "maglab/geometry.hpp"

// Discretized element (x, T) of the free-period loop space: N lifted points
// on a uniform parameter grid plus a period. A contractible loop closes
// exactly; a loop in class nu closes up to the deck word of nu:
// p_N = W(p_0). Non-contractible loops carry their accumulated cylinder
// flux relative to the class reference (see action.hpp).

namespace maglab {

struct convention_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoopPath {
    std::vector<HPoint> pts;
    double T = 1.0;
    DeckWord cls;                    // empty word = contractible
    std::string reference_id;        // id of the reference loop of the class

    // Cylinder-flux bookkeeping for non-contractible classes: flux of a
    // cylinder from the class reference to `snapshot`, plus a live panel
    // from `snapshot` to the current points (see action.hpp::rebase_flux).
    bool has_cyl_flux = false;
    double cyl_flux = 0.0;
    std::vector<HPoint> snapshot;

    int n() const { return static_cast<int>(pts.size()); }
    bool contractible() const { return cls.empty(); }
    double segment_duration() const { return T / n(); }
};

inline std::string class_key(const DeckWord& w) {
    std::string k;
    for (const auto& l : w) {
        k += l.inverse ? '-' : '+';
        k += static_cast<char>('0' + l.index);
    }
    return k;
}

/// Deck transformation closing the loop (identity for contractible).
inline Isometry closing_map(const LoopPath& loop, const FuchsianGenus2* G) {
    if (loop.contractible()) return Isometry::identity();
    if (G == nullptr) throw convention_error("non-contractible loop needs a Fuchsian group");
    return G->word(loop.cls);
}

/// Point p_N closing the polygonal loop.
inline HPoint closing_point(const LoopPath& loop, const FuchsianGenus2* G) {
    return loop.contractible() ? loop.pts.front()
                               : closing_map(loop, G).apply(loop.pts.front());
}

inline void check_loop(const LoopPath& loop) {
    if (loop.n() < 8) throw std::invalid_argument("LoopPath: need at least 8 points");
    if (!(loop.T > 0.0)) throw std::invalid_argument("LoopPath: period must be positive");
}

// ---------------------------------------------------------------------------
// Constructors.

/// Geodesic circle of radius r around `center`, N points, traversed
/// counterclockwise for ccw = true, at period T.
inline LoopPath circle_loop(const HPoint& center, double r, int N, double T, bool ccw = true) {
    LoopPath loop;
    loop.T = T;
    loop.pts.reserve(N);
    for (int i = 0; i < N; ++i) {
        const double phi = (ccw ? 1.0 : -1.0) * 2.0 * std::numbers::pi * i / N;
        loop.pts.push_back(geodesic_polar_point(center, r, phi));
    }
    return loop;
}

/// Circle parametrized at speed sqrt(2k): T = length / sqrt(2k).
inline LoopPath circle_loop_at_energy(const HPoint& center, double r, int N, double k,
                                      bool ccw = true) {
    const double len = 2.0 * std::numbers::pi * std::sinh(r);
    return circle_loop(center, r, N, len / std::sqrt(2.0 * k), ccw);
}

/// Constant loop at a point (kinetic term and flux vanish; S_k = k T).
inline LoopPath point_loop(const HPoint& p, int N, double T) {
    LoopPath loop;
    loop.T = T;
    loop.pts.assign(N, p);
    return loop;
}

/// Loop sampled from a closed trajectory (one prime period).
inline LoopPath loop_from_orbit(const Trajectory& orbit, int N) {
    LoopPath loop;
    loop.T = orbit.total_time;
    loop.pts.reserve(N);
    const size_t M = orbit.samples.size();
    for (int i = 0; i < N; ++i) {
        const double t = orbit.total_time * i / N;
        // locate the bracketing samples (uniform in t)
        size_t j = static_cast<size_t>(t / orbit.total_time * (M - 1));
        j = std::min(j, M - 2);
        while (j + 1 < M - 1 && orbit.samples[j + 1].t < t) ++j;
        while (j > 0 && orbit.samples[j].t > t) --j;
        const auto& a = orbit.samples[j];
        const auto& b = orbit.samples[j + 1];
        const double lam = (t - a.t) / (b.t - a.t);
        loop.pts.push_back(HPoint{a.state.q.x + lam * (b.state.q.x - a.state.q.x),
                                  a.state.q.y + lam * (b.state.q.y - a.state.q.y)});
    }
    return loop;
}

/// Closed geodesic loop along the axis of a group generator; the natural
/// reference loop for that free homotopy class. The generators translate
/// through the octagon center, so the axis is the geodesic from the center
/// to its image.
inline LoopPath axis_loop(const FuchsianGenus2& G, int gen_index, int N) {
    const Isometry& W = G.gen[gen_index];
    const HPoint q0 = G.center;
    const HPoint q1 = W.apply(q0);
    const double ell = hyperbolic_distance(q0, q1);
    LoopPath loop;
    loop.cls = {DeckLetter{gen_index, false}};
    loop.pts.reserve(N);
    for (int i = 0; i < N; ++i)
        loop.pts.push_back(translation_along(q0, q1, ell * i / N).apply(q0));
    loop.T = ell;  // unit-speed parametrization by default
    return loop;
}

// ---------------------------------------------------------------------------
// The iteration map psi^n and concatenation.

/// psi^n(x, T) = (x^n, nT). For class nu the lift of the j-th copy is the
/// j-th deck translate, so the iterate closes up to W^n.
inline LoopPath iterate_loop(const LoopPath& loop, int n, const FuchsianGenus2* G = nullptr) {
    if (n < 1) throw std::invalid_argument("iterate_loop: n must be >= 1");
    if (n == 1) return loop;
    LoopPath out;
    out.T = loop.T * n;
    out.pts.reserve(loop.pts.size() * n);
    Isometry W = Isometry::identity();
    const Isometry step = loop.contractible() ? Isometry::identity() : closing_map(loop, G);
    for (int j = 0; j < n; ++j) {
        for (const auto& p : loop.pts)
            out.pts.push_back(loop.contractible() ? p : W.apply(p));
        if (!loop.contractible()) W = (step * W).normalized();
    }
    out.cls.clear();
    for (int j = 0; j < n; ++j)
        out.cls.insert(out.cls.end(), loop.cls.begin(), loop.cls.end());
    out.reference_id = loop.reference_id.empty() ? "" : loop.reference_id + "^" + std::to_string(n);
    if (loop.has_cyl_flux) {
        // Iterating the connecting cylinder multiplies its flux by n
        // (the b(nu, n) = 0 reference convention).
        out.has_cyl_flux = true;
        out.cyl_flux = n * loop.cyl_flux;
        out.snapshot.reserve(loop.snapshot.size() * n);
        Isometry V = Isometry::identity();
        for (int j = 0; j < n; ++j) {
            for (const auto& p : loop.snapshot)
                out.snapshot.push_back(loop.contractible() ? p : V.apply(p));
            if (!loop.contractible()) V = (step * V).normalized();
        }
    }
    return out;
}

/// Time-concatenation of two contractible loops at a shared basepoint.
/// Segment durations must match so the discrete action stays additive.
inline LoopPath concatenate(const LoopPath& A, const LoopPath& B) {
    if (!A.contractible() || !B.contractible())
        throw std::invalid_argument("concatenate: both loops must be contractible");
    const double gap = hyperbolic_distance(A.pts.front(), B.pts.front());
    if (gap > 1e-10)
        throw std::invalid_argument("concatenate: loops must share the basepoint");
    const double ha = A.segment_duration(), hb = B.segment_duration();
    if (std::abs(ha - hb) > 1e-12 * std::max(ha, hb))
        throw std::invalid_argument("concatenate: segment durations must match");
    LoopPath out;
    out.T = A.T + B.T;
    out.pts = A.pts;
    out.pts.insert(out.pts.end(), B.pts.begin(), B.pts.end());
    return out;
}

/// Reverse traversal (the loop bar{A}).
inline LoopPath reverse_loop(const LoopPath& A) {
    if (!A.contractible())
        throw std::invalid_argument("reverse_loop: only contractible loops supported");
    LoopPath out = A;
    // keep the basepoint first, reverse the rest
    for (int i = 1, j = A.n() - 1; i < j; ++i, --j) std::swap(out.pts[i], out.pts[j]);
    return out;
}

/// Hyperbolic length of the closed polyline.
inline double loop_length(const LoopPath& loop, const FuchsianGenus2* G = nullptr) {
    double len = 0.0;
    for (int i = 0; i + 1 < loop.n(); ++i)
        len += hyperbolic_distance(loop.pts[i], loop.pts[i + 1]);
    len += hyperbolic_distance(loop.pts.back(), closing_point(loop, G));
    return len;
}

/// Resample to N points uniformly by hyperbolic arclength (chart-linear
/// interpolation within segments). Keeps the period and the class.
inline LoopPath resample_by_arclength(const LoopPath& loop, int N,
                                      const FuchsianGenus2* G = nullptr) {
    const int n = loop.n();
    std::vector<HPoint> ext = loop.pts;
    ext.push_back(closing_point(loop, G));
    std::vector<double> cum(n + 1, 0.0);
    for (int i = 0; i < n; ++i)
        cum[i + 1] = cum[i] + hyperbolic_distance(ext[i], ext[i + 1]);
    const double total = cum[n];
    LoopPath out = loop;
    out.pts.clear();
    out.pts.reserve(N);
    if (total < 1e-300) {  // degenerate (point) loop
        out.pts.assign(N, loop.pts.front());
        return out;
    }
    int j = 0;
    for (int i = 0; i < N; ++i) {
        const double s = total * i / N;
        while (j + 1 < n && cum[j + 1] < s) ++j;
        const double seg = cum[j + 1] - cum[j];
        const double lam = seg > 0.0 ? (s - cum[j]) / seg : 0.0;
        out.pts.push_back(HPoint{ext[j].x + lam * (ext[j + 1].x - ext[j].x),
                                 ext[j].y + lam * (ext[j + 1].y - ext[j].y)});
        if (i == 0) out.pts.back() = loop.pts.front();  // pin the basepoint
    }
    return out;
}

}  // namespace maglab
