#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "maglab/field.hpp"
#include "maglab/geometry.hpp"

// Magnetic flow on the upper half-plane: constant-speed curves with
// covariant acceleration lorentz_sign * f * J(v). In coordinates the
// Christoffel symbols of (dx^2+dy^2)/y^2 give
//   vx' = (2/y) vx vy        - sL * f * (-vy)... see ode_rhs.
// Energy E = (vx^2+vy^2)/(2 y^2) is a first integral; the integrator
// renormalizes ||v|| every step and reports the drift it removed.

namespace maglab {

struct integration_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FlowState {
    HPoint q;
    double vx = 0.0;
    double vy = 0.0;

    TangentVec vel() const { return TangentVec{q, vx, vy}; }
    double energy() const { return 0.5 * (vx * vx + vy * vy) / (q.y * q.y); }
};

struct FlowDeriv {
    double dx, dy, dvx, dvy;
};

inline FlowDeriv ode_rhs(const FlowState& s, const MagneticSystem& sys) {
    const double y = s.q.y;
    const double f = sigma_density(s.q, sys);
    const double sL = sys.lorentz_sign;
    FlowDeriv d;
    d.dx = s.vx;
    d.dy = s.vy;
    d.dvx = (2.0 / y) * s.vx * s.vy - sL * f * s.vy;
    d.dvy = -(s.vx * s.vx - s.vy * s.vy) / y + sL * f * s.vx;
    return d;
}

/// Covariant acceleration nabla_v v (the Lorentz force) at a state.
inline TangentVec covariant_acceleration(const FlowState& s, const MagneticSystem& sys) {
    const FlowDeriv d = ode_rhs(s, sys);
    const double y = s.q.y;
    const double ax = d.dvx - (2.0 / y) * s.vx * s.vy;
    const double ay = d.dvy + (s.vx * s.vx - s.vy * s.vy) / y;
    return TangentVec{s.q, ax, ay};
}

struct TrajectorySample {
    double t;
    FlowState state;
    double drift;  // relative energy deviation removed by the projection
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    double dt = 0.0;
    double total_time = 0.0;
    double drift_max_step = 0.0;  // max per-step pre-projection |E - k|/k
    double drift_accum = 0.0;     // sum of per-step pre-projection |dE|/k
};

namespace detail {

inline FlowState rk4_step(const FlowState& s, double dt, const MagneticSystem& sys) {
    auto adv = [&](const FlowState& base, const FlowDeriv& d, double h) {
        FlowState out;
        out.q.x = base.q.x + h * d.dx;
        out.q.y = base.q.y + h * d.dy;
        out.vx = base.vx + h * d.dvx;
        out.vy = base.vy + h * d.dvy;
        return out;
    };
    const FlowDeriv k1 = ode_rhs(s, sys);
    const FlowDeriv k2 = ode_rhs(adv(s, k1, 0.5 * dt), sys);
    const FlowDeriv k3 = ode_rhs(adv(s, k2, 0.5 * dt), sys);
    const FlowDeriv k4 = ode_rhs(adv(s, k3, dt), sys);
    FlowState out;
    out.q.x = s.q.x + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    out.q.y = s.q.y + dt / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
    out.vx = s.vx + dt / 6.0 * (k1.dvx + 2.0 * k2.dvx + 2.0 * k3.dvx + k4.dvx);
    out.vy = s.vy + dt / 6.0 * (k1.dvy + 2.0 * k2.dvy + 2.0 * k3.dvy + k4.dvy);
    return out;
}

inline void project_energy(FlowState& s, double k) {
    const double n = std::hypot(s.vx, s.vy) / s.q.y;
    const double target = std::sqrt(2.0 * k);
    if (n > 0.0) {
        const double scale = target / n;
        s.vx *= scale;
        s.vy *= scale;
    }
}

}  // namespace detail

/// Fixed-step RK4 with per-step energy projection. `stride` controls how
/// many steps apart samples are stored (the final state is always stored).
/// With `project = false` the renormalization is skipped and the drift
/// fields report the raw integrator drift (used by the convergence probe).
inline Trajectory integrate(FlowState state, double t_end, double dt, const MagneticSystem& sys,
                            int stride = 1, bool project = true) {
    if (!(dt > 0.0) || !(t_end > 0.0))
        throw std::invalid_argument("integrate: dt and t_end must be positive");
    const double k = sys.energy;
    detail::project_energy(state, k);
    Trajectory traj;
    traj.dt = dt;
    const long nsteps = static_cast<long>(std::ceil(t_end / dt - 1e-12));
    traj.samples.reserve(static_cast<size_t>(nsteps / stride + 2));
    traj.samples.push_back({0.0, state, 0.0});
    double t = 0.0;
    for (long i = 0; i < nsteps; ++i) {
        const double h = std::min(dt, t_end - t);
        FlowState next = detail::rk4_step(state, h, sys);
        if (!(next.q.y > 0.0))
            throw integration_error("integrate: state left the upper half-plane (dt too large?)");
        const double drift = std::abs(next.energy() - k) / k;
        traj.drift_max_step = std::max(traj.drift_max_step, drift);
        traj.drift_accum += drift;
        if (project) detail::project_energy(next, k);
        state = next;
        t += h;
        if ((i + 1) % stride == 0 || i + 1 == nsteps)
            traj.samples.push_back({t, state, drift});
    }
    traj.total_time = t;
    return traj;
}

namespace detail {

template <typename Real>
struct RawState {
    Real x, y, vx, vy;
};

/// RK4 step of the flow equations over a caller-supplied field density.
/// Templated on the scalar so the drift probe can run in extended precision.
template <typename Real, typename FieldFn>
RawState<Real> rk4_step_t(const RawState<Real>& s, Real dt, FieldFn&& f, Real sL) {
    auto rhs = [&](const RawState<Real>& u) {
        const Real fd = f(u.x, u.y);
        return RawState<Real>{u.vx, u.vy,
                              (Real(2) / u.y) * u.vx * u.vy - sL * fd * u.vy,
                              -(u.vx * u.vx - u.vy * u.vy) / u.y + sL * fd * u.vx};
    };
    auto adv = [&](const RawState<Real>& b, const RawState<Real>& d, Real h) {
        return RawState<Real>{b.x + h * d.x, b.y + h * d.y, b.vx + h * d.vx, b.vy + h * d.vy};
    };
    const RawState<Real> k1 = rhs(s);
    const RawState<Real> k2 = rhs(adv(s, k1, dt / Real(2)));
    const RawState<Real> k3 = rhs(adv(s, k2, dt / Real(2)));
    const RawState<Real> k4 = rhs(adv(s, k3, dt));
    return RawState<Real>{s.x + dt / Real(6) * (k1.x + Real(2) * k2.x + Real(2) * k3.x + k4.x),
                          s.y + dt / Real(6) * (k1.y + Real(2) * k2.y + Real(2) * k3.y + k4.y),
                          s.vx + dt / Real(6) * (k1.vx + Real(2) * k2.vx + Real(2) * k3.vx + k4.vx),
                          s.vy + dt / Real(6) * (k1.vy + Real(2) * k2.vy + Real(2) * k3.vy + k4.vy)};
}

}  // namespace detail

/// Pre-projection energy drift over [0, t_end]: the maximal relative
/// deviation |E - k|/k of the unprojected integration. Runs in extended
/// precision so the integrator's order-4 signal is not drowned by rounding.
inline double energy_drift_probe(const FlowState& state, double t_end, double dt,
                                 const MagneticSystem& sys) {
    using LD = long double;
    auto field = [&](LD x, LD y) -> LD {
        if (sys.kind == FieldKind::constant) return static_cast<LD>(sys.strength);
        return static_cast<LD>(
            sigma_density(HPoint{static_cast<double>(x), static_cast<double>(y)}, sys));
    };
    detail::RawState<LD> s{state.q.x, state.q.y, state.vx, state.vy};
    // rescale to energy k exactly
    const LD k = sys.energy;
    const LD n0 = std::sqrt(s.vx * s.vx + s.vy * s.vy) / s.y;
    const LD scale = std::sqrt(LD(2) * k) / n0;
    s.vx *= scale;
    s.vy *= scale;
    const long nsteps = static_cast<long>(std::ceil(t_end / dt - 1e-12));
    const LD sL = sys.lorentz_sign;
    LD worst = 0.0;
    for (long i = 0; i < nsteps; ++i) {
        s = detail::rk4_step_t<LD>(s, static_cast<LD>(dt), field, sL);
        if (!(s.y > 0.0)) throw integration_error("energy_drift_probe: left the half-plane");
        const LD e = (s.vx * s.vx + s.vy * s.vy) / (LD(2) * s.y * s.y);
        worst = std::max(worst, std::abs(e - k) / k);
    }
    return static_cast<double>(worst);
}

/// Phase-space distance used by the closure test: position part is the
/// hyperbolic distance, velocity part the metric norm of the difference
/// after parallel transport along the connecting geodesic.
inline std::pair<double, double> phase_distance(const FlowState& a, const FlowState& b) {
    const double dp = hyperbolic_distance(a.q, b.q);
    TangentVec va = a.vel();
    if (dp > 1e-15) va = parallel_transport(va, b.q);
    va.base = b.q;
    const TangentVec diff{b.q, va.vx - b.vx, va.vy - b.vy};
    return {dp, metric_norm(diff)};
}

struct ClosureOptions {
    double dt = 1e-3;
    double pos_tol = 1e-6;
    double vel_tol = 1e-6;
    double arm_distance = 1e-2;   // detector arms after the orbit moves this far
    double escape_distance = 50;  // beyond this the lift cannot return
};

/// Smallest t <= horizon at which the lifted orbit returns to the initial
/// phase point (contractible closure). Returns nothing if no return occurs.
inline std::optional<double> closure_check(const FlowState& start, const MagneticSystem& sys,
                                           double horizon, ClosureOptions opt = {}) {
    FlowState s0 = start;
    detail::project_energy(s0, sys.energy);
    FlowState prev = s0, cur = s0;
    double d_prev2 = 0.0, d_prev = 0.0;
    bool armed = false;
    double t = 0.0;
    const double arm2 = opt.arm_distance;
    long step = 0;
    auto pos_dist = [&](const FlowState& s) { return hyperbolic_distance(s.q, s0.q); };
    FlowState base_minus2 = s0;  // state two steps behind `cur`
    FlowState base_minus1 = s0;
    while (t < horizon) {
        base_minus2 = base_minus1;
        base_minus1 = cur;
        prev = cur;
        cur = detail::rk4_step(cur, opt.dt, sys);
        if (!(cur.q.y > 1e-12)) return std::nullopt;  // numerically escaping downward
        detail::project_energy(cur, sys.energy);
        t += opt.dt;
        ++step;
        const double d = pos_dist(cur);
        if (d > opt.escape_distance) return std::nullopt;
        if (!armed) {
            if (d > arm2) armed = true;
        } else if (step >= 3 && d_prev <= d && d_prev <= d_prev2 && d_prev < arm2) {
            // local minimum of the return distance at t - dt: refine by
            // golden-section over [t - 2dt, t], re-stepping from base_minus2.
            const double t_lo = t - 2.0 * opt.dt, t_hi = t;
            auto eval = [&](double tt) {
                FlowState s = detail::rk4_step(base_minus2, tt - t_lo, sys);
                detail::project_energy(s, sys.energy);
                return std::make_pair(pos_dist(s), s);
            };
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            double a = t_lo, b = t_hi;
            double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
            double f1 = eval(c1).first, f2 = eval(c2).first;
            for (int it = 0; it < 80 && (b - a) > 1e-13 * std::max(1.0, t); ++it) {
                if (f1 < f2) {
                    b = c2; c2 = c1; f2 = f1;
                    c1 = b - gr * (b - a);
                    f1 = eval(c1).first;
                } else {
                    a = c1; c1 = c2; f1 = f2;
                    c2 = a + gr * (b - a);
                    f2 = eval(c2).first;
                }
            }
            const double t_star = 0.5 * (a + b);
            const auto [dp, s_star] = eval(t_star);
            const auto [pos_err, vel_err] = phase_distance(s_star, s0);
            if (pos_err < opt.pos_tol && vel_err < opt.vel_tol) return t_star;
        }
        d_prev2 = d_prev;
        d_prev = d;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rotationally symmetric circular orbits around the bump center. A geodesic
// circle of radius r centered there is an exact orbit when its curvature
// matches the field: coth(r) = |f(r)| / sqrt(2k).

/// Smallest self-consistent radius, if any.
inline std::optional<double> symmetric_orbit_radius(const MagneticSystem& sys, double k) {
    const double speed = std::sqrt(2.0 * k);
    auto mismatch = [&](double r) {
        return 1.0 / std::tanh(r) - std::abs(sys.density_radial(r)) / speed;
    };
    // cap the constant-field scan where coth is still resolvable in doubles
    const double r_max = (sys.kind == FieldKind::constant) ? 12.0 : sys.bump_radius;
    const int grid = 4000;
    double r_prev = 1e-8;
    double m_prev = mismatch(r_prev);
    for (int i = 1; i <= grid; ++i) {
        const double r = r_max * i / grid;
        const double m = mismatch(r);
        if (m_prev > 0.0 && m <= 0.0) {
            double lo = r_prev, hi = r;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (mismatch(mid) > 0.0 ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
        r_prev = r;
        m_prev = m;
    }
    return std::nullopt;
}

/// State on the symmetric circular orbit of radius r around `center`.
/// Orientation follows the Lorentz convention: counterclockwise around the
/// center iff lorentz_sign * f > 0 on the circle.
inline FlowState circular_orbit_state(const HPoint& center, double r, const MagneticSystem& sys,
                                      double k) {
    const double f = sys.density_radial(r);
    const double ccw = (sys.lorentz_sign * f > 0.0) ? 1.0 : -1.0;
    // Circle point at disk-angle 0 in the frame centered at `center`, with
    // the exact angular tangent pushed through from_disk and the recentering.
    const double rho = std::tanh(0.5 * r);
    const cplx w0{rho, 0.0};
    const cplx dw{0.0, ccw * rho};  // d/dphi of rho e^{i phi} at phi = 0
    const cplx z1 = from_disk(w0);
    const cplx dz1 = 2.0 * cplx(0, 1) / ((1.0 - w0) * (1.0 - w0)) * dw;
    const Isometry back = center_at(center).inverse();
    const cplx den = back.c * z1 + back.d;
    const cplx z = (back.a * z1 + back.b) / den;
    const cplx dz = dz1 / (den * den);
    FlowState s{HPoint::from(z), dz.real(), dz.imag()};
    detail::project_energy(s, k);
    return s;
}

struct SmallOrbitResult {
    double measured_period;
    double predicted_period;  // leading Ginzburg term 2 pi / |f(p0)|
    double radius;
};

/// Measure the prime period of the small orbit near p0 and compare with the
/// leading term 2 pi/|f(p0)|. For the oscillating family p0 must be the bump
/// center (the only point with an exactly closed small orbit); for constant
/// fields any p0 works.
inline SmallOrbitResult small_orbit_period(const HPoint& p0, const MagneticSystem& sys, double k) {
    const double f0 = (sys.kind == FieldKind::constant)
                          ? sys.strength
                          : sys.density_radial(hyperbolic_distance(p0, sys.bump_center));
    if (f0 == 0.0) throw std::invalid_argument("small_orbit_period: f(p0) = 0");
    if (sys.kind == FieldKind::oscillating &&
        hyperbolic_distance(p0, sys.bump_center) > 1e-9)
        throw std::invalid_argument(
            "small_orbit_period: oscillating family supports only the bump center");
    MagneticSystem sysk = sys;
    sysk.energy = k;
    const auto r = symmetric_orbit_radius(sysk, k);
    if (!r)
        throw integration_error("small_orbit_period: no closed orbit; k too large for f");
    FlowState s;
    if (sys.kind == FieldKind::constant) {
        // any direction: the orbit through p0 itself is a closed circle
        s = FlowState{p0, std::sqrt(2.0 * k) * p0.y, 0.0};
    } else {
        s = circular_orbit_state(sys.bump_center, *r, sysk, k);
    }
    ClosureOptions opt;
    opt.dt = std::min(1e-3, 2.0 * std::numbers::pi / std::abs(f0) / 2000.0);
    opt.arm_distance = std::min(1e-2, *r);
    const double horizon = 4.0 * 2.0 * std::numbers::pi / std::abs(f0);
    const auto period = closure_check(s, sysk, horizon, opt);
    if (!period)
        throw integration_error("small_orbit_period: closure not detected; k too large for f");
    return {*period, 2.0 * std::numbers::pi / std::abs(f0), *r};
}

struct LiouvilleAction {
    double mean;    // action of the normalized invariant measure
    double total;   // mean times the period
    double period;
};

/// Action of the invariant measure carried by a closed orbit:
/// average over the orbit of [2k + beta(v) + a_sigma f]. `beta` maps a point
/// to the covector of the chosen primitive; pass the zero covector for
/// constant fields.
inline LiouvilleAction liouville_action(const Trajectory& orbit, const MagneticSystem& sys,
                                        const std::function<Covector(const HPoint&)>& beta,
                                        double a_sigma) {
    if (orbit.samples.size() < 4)
        throw std::invalid_argument("liouville_action: trajectory too short");
    const double pos_err =
        hyperbolic_distance(orbit.samples.back().state.q, orbit.samples.front().state.q);
    if (pos_err > 1e-4)
        throw std::invalid_argument("liouville_action: orbit is not closed");
    const double k = sys.energy;
    double acc = 0.0;
    double time = 0.0;
    for (size_t i = 0; i + 1 < orbit.samples.size(); ++i) {
        auto integrand = [&](const TrajectorySample& smp) {
            const Covector b = beta(smp.state.q);
            return 2.0 * k + b.pair(smp.state.vel()) +
                   a_sigma * sigma_density(smp.state.q, sys);
        };
        const double h = orbit.samples[i + 1].t - orbit.samples[i].t;
        acc += 0.5 * h * (integrand(orbit.samples[i]) + integrand(orbit.samples[i + 1]));
        time += h;
    }
    return {acc / time, acc, time};
}

}  // namespace maglab
