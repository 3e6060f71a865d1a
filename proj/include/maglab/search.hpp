#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maglab/action.hpp"
#include "maglab/critical.hpp"
#include "maglab/dynamics.hpp"

// Critical-point discovery for the free-period action: preconditioned
// descent to local minimizers, an elastic-string mountain pass with a
// climbing refinement for the minimax values c_n(k), the discrete second
// variation for Morse index and nullity, Palais-Smale classification of
// optimizer traces, and geometric-distinctness tests.

namespace maglab {

struct SearchOptions {
    double T_min = 1e-3;
    double T_max = 1e3;
    double tol_grad = 2e-6;       // mean gradient norm at convergence
    double tol_residual = 1e-4;   // ODE defect of a converged loop
    int max_iters = 20000;
    int reparam_every = 25;
    int fan_depth = 1;
    double step_init = 1e-2;
    double step_max = 10.0;
    int max_backtracks = 45;

    // mountain pass
    int path_loops = 32;          // M
    int string_iters = 600;
    double tol_saddle_grad = 1e-5;
    int climb_iters = 4000;
    double stall_tol = 1e-9;      // path-max stabilization
    int stall_window = 20;

    ActionOptions action() const { return ActionOptions{fan_depth, 0.05}; }
};

enum class PSClass { converged, shrinking, escaping, inconsistent, running };

inline const char* to_string(PSClass c) {
    switch (c) {
        case PSClass::converged: return "converged";
        case PSClass::shrinking: return "shrinking";
        case PSClass::escaping: return "escaping";
        case PSClass::inconsistent: return "inconsistent";
        case PSClass::running: return "running";
    }
    return "?";
}

struct TracePoint {
    double S;
    double T;
    double grad_mean;
    bool contractible;
};

using DescentTrace = std::vector<TracePoint>;

/// Classify an optimizer trace per the Palais-Smale trichotomy: bounded
/// convergence, shrinking to a point at level zero, period escape, or the
/// impossible combination (non-contractible with vanishing period and
/// bounded action) flagged as inconsistent.
inline PSClass palais_smale_monitor(const DescentTrace& trace, const SearchOptions& opt = {}) {
    if (trace.empty()) return PSClass::running;
    const TracePoint& last = trace.back();
    if (last.T >= opt.T_max) return PSClass::escaping;
    if (last.T <= opt.T_min * (1.0 + 1e-9)) {
        if (!last.contractible) {
            // period collapse must force the action to blow up (relative
            // completeness); a bounded tail is an inconsistency
            return last.S > 1e3 ? PSClass::converged : PSClass::inconsistent;
        }
        return PSClass::shrinking;
    }
    if (last.grad_mean < opt.tol_grad) return PSClass::converged;
    return PSClass::running;
}

/// Max pointwise defect of the discrete magnetic-geodesic equation
/// (central differences of the loop against the Lorentz force).
inline double ode_residual(const LoopPath& loop, const MagneticSystem& sys) {
    const int N = loop.n();
    const FuchsianGenus2* G = sys.group;
    const Isometry W = closing_map(loop, G);
    const Isometry Winv = W.inverse();
    auto at = [&](int i) -> HPoint {
        if (i >= 0 && i < N) return loop.pts[i];
        if (i >= N) return loop.contractible() ? loop.pts[i - N] : W.apply(loop.pts[i - N]);
        return loop.contractible() ? loop.pts[i + N] : Winv.apply(loop.pts[i + N]);
    };
    const double h = loop.T / N;
    double worst = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint pm = at(i - 1), p0 = at(i), pp = at(i + 1);
        const double vx = (pp.x - pm.x) / (2.0 * h), vy = (pp.y - pm.y) / (2.0 * h);
        const double ax = (pp.x - 2.0 * p0.x + pm.x) / (h * h);
        const double ay = (pp.y - 2.0 * p0.y + pm.y) / (h * h);
        const double y = p0.y;
        const double Ax = ax - (2.0 / y) * vx * vy;
        const double Ay = ay + (vx * vx - vy * vy) / y;
        const double f = sigma_density(p0, sys);
        const double Lx = sys.lorentz_sign * f * (-vy);
        const double Ly = sys.lorentz_sign * f * (vx);
        worst = std::max(worst, std::hypot(Ax - Lx, Ay - Ly) / y);
    }
    return worst;
}

struct CriticalPoint {
    LoopPath loop;
    double value = 0.0;
    double ode_res = 0.0;
    double dSdT = 0.0;
    double grad_mean = 0.0;
    int index = -1;    // -1: not yet computed
    int nullity = -1;
    int rotation_null = 0;
    enum class Kind { minimizer, mountain_pass, other } kind = Kind::other;
    PSClass classification = PSClass::running;
};

namespace detail {

/// Solve the cyclic symmetric tridiagonal system M u = r with
/// M = diag(d) - offdiag(a): M[i][i] = d_i, M[i][i+1] = M[i+1][i] = -a_i
/// (indices mod N). Thomas algorithm with the Sherman-Morrison corner fix.
inline void cyclic_tridiag_solve(const std::vector<double>& d, const std::vector<double>& a,
                                 const std::vector<double>& r, std::vector<double>& u) {
    const int N = static_cast<int>(d.size());
    thread_local std::vector<double> bb, z, rhs2, cwork;
    bb.assign(d.begin(), d.end());
    const double corner = -a[N - 1];
    const double gamma = -d[0];
    bb[0] = d[0] - gamma;
    bb[N - 1] = d[N - 1] - corner * corner / gamma;
    auto thomas = [&](const std::vector<double>& rr, std::vector<double>& x) {
        cwork.assign(N, 0.0);
        x.assign(N, 0.0);
        double beta = bb[0];
        x[0] = rr[0] / beta;
        for (int i = 1; i < N; ++i) {
            cwork[i] = -a[i - 1] / beta;
            beta = bb[i] - (-a[i - 1]) * cwork[i];
            x[i] = (rr[i] - (-a[i - 1]) * x[i - 1]) / beta;
        }
        for (int i = N - 2; i >= 0; --i) x[i] -= cwork[i + 1] * x[i + 1];
    };
    thomas(r, u);
    rhs2.assign(N, 0.0);
    rhs2[0] = gamma;
    rhs2[N - 1] = corner;
    thomas(rhs2, z);
    const double fact =
        (u[0] + corner * u[N - 1] / gamma) / (1.0 + z[0] + corner * z[N - 1] / gamma);
    for (int i = 0; i < N; ++i) u[i] -= fact * z[i];
}

struct Direction {
    std::vector<double> dx, dy;
    double dT = 0.0;
};

/// H1-style preconditioner: invert the kinetic-term Hessian (plus a small
/// shift) against the gradient, mode by mode. Without it plain descent
/// needs O(N^2) iterations on fine loops.
inline Direction precondition(const LoopPath& loop, const ActionGradient& g,
                              const SearchOptions& opt) {
    const int N = loop.n();
    thread_local std::vector<double> d, a;
    d.assign(N, 0.0);
    a.assign(N, 0.0);
    const double pref = N / loop.T;
    double mean_a = 0.0;
    for (int i = 0; i < N; ++i) {
        const HPoint& p = loop.pts[i];
        const HPoint& q = loop.pts[(i + 1) % N];
        const double c = 0.5 * (1.0 / (p.y * p.y) + 1.0 / (q.y * q.y));
        a[i] = pref * c;
        mean_a += a[i];
    }
    mean_a /= N;
    const double eps = std::max(1e-12, 0.02 * mean_a);
    for (int i = 0; i < N; ++i) d[i] = eps + a[(i + N - 1) % N] + a[i];
    Direction dir;
    cyclic_tridiag_solve(d, a, g.gx, dir.dx);
    cyclic_tridiag_solve(d, a, g.gy, dir.dy);
    dir.dT = g.gT / std::max(1e-12, eps);
    return dir;
}

inline void apply_direction(LoopPath& loop, const Direction& dir, double alpha,
                            const SearchOptions& opt) {
    const int N = loop.n();
    for (int i = 0; i < N; ++i) {
        loop.pts[i].x -= alpha * dir.dx[i];
        loop.pts[i].y -= alpha * dir.dy[i];
        loop.pts[i].y = std::max(loop.pts[i].y, 1e-12);
    }
    loop.T = std::clamp(loop.T - alpha * dir.dT, opt.T_min, opt.T_max);
}

inline double direction_dot(const ActionGradient& g, const Direction& dir) {
    double s = g.gT * dir.dT;
    for (size_t i = 0; i < g.gx.size(); ++i) s += g.gx[i] * dir.dx[i] + g.gy[i] * dir.dy[i];
    return s;
}

}  // namespace detail

struct MinimizeResult {
    CriticalPoint cp;
    DescentTrace trace;
    int iterations = 0;
    bool hit_period_floor = false;
    bool hit_period_cap = false;
};

/// Gradient descent with backtracking and periodic arclength
/// reparametrization. Never increases the action. Terminates on gradient
/// convergence, period floor (shrinking loops), or period cap (escape).
inline MinimizeResult find_local_min(const LoopPath& seed, const MagneticSystem& sys, double k,
                                     const SearchOptions& opt = {}) {
    check_loop(seed);
    const ActionOptions aopt = opt.action();
    MinimizeResult res;
    LoopPath cur = seed;
    if (!cur.contractible() && !cur.has_cyl_flux)
        throw convention_error("find_local_min: non-contractible seed needs a reference record");
    double S = action_value(cur, sys, k, aopt);
    double alpha = opt.step_init;
    for (int iter = 0; iter < opt.max_iters; ++iter) {
        ActionGradient g = action_gradient(cur, sys, k, aopt);
        const double gm = g.mean_norm();
        res.trace.push_back({S, cur.T, gm, cur.contractible()});
        res.iterations = iter;
        if (gm < opt.tol_grad) break;
        if (cur.T <= opt.T_min * (1.0 + 1e-12)) {
            res.hit_period_floor = true;
            break;
        }
        if (cur.T >= opt.T_max * (1.0 - 1e-12)) {
            res.hit_period_cap = true;
            break;
        }
        const detail::Direction dir = detail::precondition(cur, g, opt);
        const double decr = detail::direction_dot(g, dir);
        bool accepted = false;
        for (int bt = 0; bt < opt.max_backtracks; ++bt) {
            LoopPath trial = cur;
            detail::apply_direction(trial, dir, alpha, opt);
            const double St = action_value(trial, sys, k, aopt);
            if (St <= S - 1e-4 * alpha * decr) {
                cur = std::move(trial);
                S = St;
                alpha = std::min(alpha * 1.6, opt.step_max);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // stalled at backtracking resolution
        if ((iter + 1) % opt.reparam_every == 0) {
            LoopPath rep = resample_by_arclength(cur, cur.n(), sys.group);
            const double Sr = action_value(rep, sys, k, aopt);
            if (Sr <= S + 1e-12 * (1.0 + std::abs(S))) {
                cur = std::move(rep);
                S = Sr;
            }
        }
        if (!cur.contractible() && snapshot_drift(cur) > aopt.rebase_distance)
            rebase_flux(cur, sys, aopt);
    }
    const ActionGradient g = action_gradient(cur, sys, k, aopt);
    res.cp.loop = cur;
    res.cp.value = action_value(cur, sys, k, aopt);
    res.cp.grad_mean = g.mean_norm();
    res.cp.ode_res = ode_residual(cur, sys);
    res.cp.dSdT = g.gT;
    res.cp.kind = CriticalPoint::Kind::minimizer;
    if (!res.trace.empty())
        res.trace.back() = {res.cp.value, cur.T, res.cp.grad_mean, cur.contractible()};
    res.cp.classification = palais_smale_monitor(res.trace, opt);
    return res;
}

// ---------------------------------------------------------------------------
// Second variation: dense Hessian of the discrete functional by symmetric
// differences of the exact gradient.

struct MorseData {
    int index = 0;
    int nullity = 0;
    int rotation_null = 0;       // near-zero modes aligned with time rotation
    double eps = 0.0;            // threshold used
    Eigen::VectorXd eigenvalues;
};

inline Eigen::VectorXd flatten_gradient(const ActionGradient& g) {
    const int N = static_cast<int>(g.gx.size());
    Eigen::VectorXd v(2 * N + 1);
    for (int i = 0; i < N; ++i) {
        v[2 * i] = g.gx[i];
        v[2 * i + 1] = g.gy[i];
    }
    v[2 * N] = g.gT;
    return v;
}

inline MorseData morse_index(const CriticalPoint& cp, const MagneticSystem& sys, double k,
                             const SearchOptions& opt = {}, double eps_rel = 1e-6,
                             double fd_step = 1e-5) {
    if (cp.grad_mean > 100.0 * opt.tol_grad)
        throw std::invalid_argument("morse_index: refusing a non-converged critical point");
    const ActionOptions aopt = opt.action();
    const LoopPath& loop = cp.loop;
    const int N = loop.n();
    const int dim = 2 * N + 1;
    Eigen::MatrixXd H(dim, dim);
    auto grad_at = [&](const LoopPath& l) { return flatten_gradient(action_gradient(l, sys, k, aopt)); };
    for (int j = 0; j < dim; ++j) {
        LoopPath lp = loop, lm = loop;
        double h = fd_step;
        if (j < 2 * N) {
            const int i = j / 2;
            if (j % 2 == 0) {
                lp.pts[i].x += h;
                lm.pts[i].x -= h;
            } else {
                h = fd_step * loop.pts[i].y;  // scale with the conformal factor
                lp.pts[i].y += h;
                lm.pts[i].y -= h;
            }
        } else {
            h = fd_step * loop.T;
            lp.T += h;
            lm.T -= h;
        }
        H.col(j) = (grad_at(lp) - grad_at(lm)) / (2.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H);
    MorseData out;
    out.eigenvalues = solver.eigenvalues();
    const double scale = std::max(std::abs(out.eigenvalues[0]),
                                  std::abs(out.eigenvalues[dim - 1]));
    out.eps = eps_rel * scale;
    // rotation direction: discrete time derivative of the loop
    Eigen::VectorXd rot(dim);
    for (int i = 0; i < N; ++i) {
        const HPoint& a = loop.pts[(i + N - 1) % N];
        const HPoint& b = loop.pts[(i + 1) % N];
        rot[2 * i] = b.x - a.x;
        rot[2 * i + 1] = b.y - a.y;
    }
    rot[2 * N] = 0.0;
    if (rot.norm() > 0.0) rot.normalize();
    for (int j = 0; j < dim; ++j) {
        const double lam = out.eigenvalues[j];
        if (lam < -out.eps) ++out.index;
        else if (lam <= out.eps) {
            ++out.nullity;
            if (rot.norm() > 0.0 &&
                std::abs(solver.eigenvectors().col(j).dot(rot)) > 0.5)
                ++out.rotation_null;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mountain pass: string method with re-spacing plus a climbing refinement.

struct MountainPassResult {
    CriticalPoint saddle;
    double c_n = 0.0;            // minimax estimate (upper bound)
    double path_max_final = 0.0;
    double noise = 0.0;          // stabilization band of the path maximum
    bool converged = false;
    bool ps_failure = false;     // argmax escaped in period
    int n = 1;
    std::vector<double> path_values;
    DescentTrace trace;
};

namespace detail {

inline double loop_space_dist(const LoopPath& a, const LoopPath& b) {
    double s = 0.0;
    for (int i = 0; i < a.n(); ++i) {
        const double d = hyperbolic_distance(a.pts[i], b.pts[i]);
        s += d * d;
    }
    return std::sqrt(s / a.n() + (a.T - b.T) * (a.T - b.T));
}

inline LoopPath interpolate_loops(const LoopPath& a, const LoopPath& b, double lam) {
    LoopPath out = a;
    for (int i = 0; i < a.n(); ++i) {
        out.pts[i].x = a.pts[i].x + lam * (b.pts[i].x - a.pts[i].x);
        out.pts[i].y = a.pts[i].y + lam * (b.pts[i].y - a.pts[i].y);
    }
    out.T = a.T + lam * (b.T - a.T);
    return out;
}

/// Cyclic re-alignment of b's start index minimizing the matching distance.
inline void align_start(const LoopPath& a, LoopPath& b) {
    const int N = a.n();
    double best = 1e300;
    int best_shift = 0;
    for (int s = 0; s < N; ++s) {
        double acc = 0.0;
        for (int i = 0; i < N; i += 4) {
            const HPoint& p = a.pts[i];
            const HPoint& q = b.pts[(i + s) % N];
            acc += cosh_distance(p, q);
        }
        if (acc < best) {
            best = acc;
            best_shift = s;
        }
    }
    if (best_shift != 0) {
        std::vector<HPoint> rot(N);
        for (int i = 0; i < N; ++i) rot[i] = b.pts[(i + best_shift) % N];
        b.pts = std::move(rot);
    }
}

inline void respace_string(std::vector<LoopPath>& string) {
    const int M = static_cast<int>(string.size());
    std::vector<double> cum(M, 0.0);
    for (int j = 1; j < M; ++j)
        cum[j] = cum[j - 1] + loop_space_dist(string[j - 1], string[j]);
    if (cum[M - 1] < 1e-300) return;
    std::vector<LoopPath> out;
    out.reserve(M);
    out.push_back(string.front());
    int seg = 0;
    for (int j = 1; j + 1 < M; ++j) {
        const double target = cum[M - 1] * j / (M - 1);
        while (seg + 1 < M - 1 && cum[seg + 1] < target) ++seg;
        const double den = cum[seg + 1] - cum[seg];
        const double lam = den > 0.0 ? (target - cum[seg]) / den : 0.0;
        out.push_back(interpolate_loops(string[seg], string[seg + 1], lam));
    }
    out.push_back(string.back());
    string.swap(out);
}

}  // namespace detail

/// Elastic-string minimax between psi^n(minimizer) and psi^n(valley):
/// interior loops descend with per-loop backtracking, the string is
/// re-spaced each sweep, and the stabilized arg-max loop is refined by a
/// climbing step (gradient reversed along the path tangent). The returned
/// c_n is an upper bound for the true minimax value.
inline MountainPassResult mountain_pass(const CriticalPoint& minimizer, const LoopPath& valley,
                                        int n, const MagneticSystem& sys, double k,
                                        const SearchOptions& opt = {}) {
    const ActionOptions aopt = opt.action();
    MountainPassResult res;
    res.n = n;
    LoopPath A = iterate_loop(minimizer.loop, n, sys.group);
    LoopPath V = valley;
    if (V.n() != minimizer.loop.n()) V = resample_by_arclength(V, minimizer.loop.n(), sys.group);
    LoopPath B = iterate_loop(V, n, sys.group);
    const double SA = action_value(A, sys, k, aopt);
    const double SB = action_value(B, sys, k, aopt);
    if (!(SB < SA))
        throw std::invalid_argument("mountain_pass: valley must lie below the minimizer");

    // degenerate probe: identical endpoints collapse to the minimizer
    if (detail::loop_space_dist(A, B) < 1e-12) {
        res.saddle = minimizer;
        res.c_n = SA;
        res.path_max_final = SA;
        res.converged = true;
        return res;
    }
    if (A.contractible()) detail::align_start(A, B);

    const int M = opt.path_loops;
    std::vector<LoopPath> string;
    string.reserve(M);
    for (int j = 0; j < M; ++j)
        string.push_back(detail::interpolate_loops(A, B, static_cast<double>(j) / (M - 1)));

    std::vector<double> S(M), alpha(M, opt.step_init);
    auto value = [&](const LoopPath& l) { return action_value(l, sys, k, aopt); };
    for (int j = 0; j < M; ++j) S[j] = value(string[j]);

    std::vector<double> max_history;
    int argmax = 0;
    for (int sweep = 0; sweep < opt.string_iters; ++sweep) {
        // (a) one damped descent step per interior loop
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int j = 1; j < M - 1; ++j) {
            ActionGradient g = action_gradient(string[j], sys, k, aopt);
            const detail::Direction dir = detail::precondition(string[j], g, opt);
            const double decr = detail::direction_dot(g, dir);
            for (int bt = 0; bt < 20; ++bt) {
                LoopPath trial = string[j];
                detail::apply_direction(trial, dir, alpha[j], opt);
                const double St = value(trial);
                if (St <= S[j] - 1e-4 * alpha[j] * decr) {
                    string[j] = std::move(trial);
                    S[j] = St;
                    alpha[j] = std::min(alpha[j] * 1.4, opt.step_max);
                    break;
                }
                alpha[j] *= 0.5;
            }
        }
        // (b) re-space along the path
        detail::respace_string(string);
        for (int j = 1; j < M - 1; ++j) S[j] = value(string[j]);
        // (c) track the maximum
        argmax = static_cast<int>(std::max_element(S.begin(), S.end()) - S.begin());
        max_history.push_back(S[argmax]);
        res.trace.push_back({S[argmax], string[argmax].T,
                             action_gradient(string[argmax], sys, k, aopt).mean_norm(), true});
        if (static_cast<int>(max_history.size()) > opt.stall_window) {
            const auto tail = max_history.end() - opt.stall_window;
            const auto [lo, hi] = std::minmax_element(tail, max_history.end());
            if (*hi - *lo < opt.stall_tol * (1.0 + std::abs(*hi))) break;
        }
    }
    res.path_values = S;
    res.path_max_final = max_history.empty() ? SA : max_history.back();
    if (!max_history.empty()) {
        const int w = std::min<int>(opt.stall_window, max_history.size());
        const auto [lo, hi] = std::minmax_element(max_history.end() - w, max_history.end());
        res.noise = *hi - *lo;
    }

    // interior argmax (plateau tie-break: largest gradient norm)
    argmax = std::clamp(argmax, 1, M - 2);
    double best_g = -1.0;
    int pick = argmax;
    for (int j = std::max(1, argmax - 2); j <= std::min(M - 2, argmax + 2); ++j) {
        if (std::abs(S[j] - S[argmax]) < 1e-9 * (1.0 + std::abs(S[argmax]))) {
            const double gn = action_gradient(string[j], sys, k, aopt).mean_norm();
            if (gn > best_g) {
                best_g = gn;
                pick = j;
            }
        }
    }

    // climbing refinement toward the saddle
    LoopPath saddle = string[pick];
    Eigen::VectorXd tau;
    {
        const LoopPath& lo = string[pick - 1];
        const LoopPath& hi = string[pick + 1];
        const int N = saddle.n();
        tau.resize(2 * N + 1);
        for (int i = 0; i < N; ++i) {
            tau[2 * i] = hi.pts[i].x - lo.pts[i].x;
            tau[2 * i + 1] = hi.pts[i].y - lo.pts[i].y;
        }
        tau[2 * N] = hi.T - lo.T;
        if (tau.norm() > 0.0) tau.normalize();
    }
    double step = opt.step_init;
    double gnorm_prev = 1e300;
    for (int it = 0; it < opt.climb_iters; ++it) {
        ActionGradient g = action_gradient(saddle, sys, k, aopt);
        const double gm = g.mean_norm();
        if (gm < opt.tol_saddle_grad) break;
        if (saddle.T >= opt.T_max * (1.0 - 1e-12)) {
            res.ps_failure = true;
            break;
        }
        if (gm > gnorm_prev * 1.05) step *= 0.5;
        else step = std::min(step * 1.05, opt.step_max);
        gnorm_prev = gm;
        Eigen::VectorXd gv = flatten_gradient(g);
        const double along = gv.dot(tau);
        gv -= 2.0 * along * tau;  // reverse the tangential component
        ActionGradient gc = g;
        const int N = saddle.n();
        for (int i = 0; i < N; ++i) {
            gc.gx[i] = gv[2 * i];
            gc.gy[i] = gv[2 * i + 1];
        }
        gc.gT = gv[2 * N];
        const detail::Direction dir = detail::precondition(saddle, gc, opt);
        detail::apply_direction(saddle, dir, step, opt);
        if (!saddle.contractible() && snapshot_drift(saddle) > aopt.rebase_distance)
            rebase_flux(saddle, sys, aopt);
    }

    const ActionGradient g = action_gradient(saddle, sys, k, aopt);
    res.saddle.loop = saddle;
    res.saddle.value = action_value(saddle, sys, k, aopt);
    res.saddle.grad_mean = g.mean_norm();
    res.saddle.dSdT = g.gT;
    res.saddle.ode_res = ode_residual(saddle, sys);
    res.saddle.kind = CriticalPoint::Kind::mountain_pass;
    res.converged = !res.ps_failure && res.saddle.grad_mean < 10.0 * opt.tol_saddle_grad &&
                    res.saddle.ode_res < opt.tol_residual * 10.0;
    res.c_n = res.converged ? res.saddle.value : res.path_max_final;
    res.saddle.classification = res.ps_failure ? PSClass::escaping
                              : (res.converged ? PSClass::converged : PSClass::running);
    return res;
}

// ---------------------------------------------------------------------------
// Geometric distinctness.

/// Surface distance approximated by the minimum over the identity and the
/// eight neighbor moves (valid for loops within the fundamental domain).
inline double surface_cosh_distance(const HPoint& p, const HPoint& q, const FuchsianGenus2* G) {
    double best = cosh_distance(p, q);
    if (G != nullptr)
        for (int m = 0; m < 8; ++m)
            best = std::min(best, cosh_distance(p, G->neighbor(m).apply(q)));
    return best;
}

/// Hausdorff distance between the reduced point sets of two loops.
inline double loop_hausdorff(const LoopPath& a, const LoopPath& b, const FuchsianGenus2* G) {
    auto reduced = [&](const LoopPath& l) {
        std::vector<HPoint> out;
        out.reserve(l.n());
        for (const auto& p : l.pts)
            out.push_back(G != nullptr ? reduce_to_domain(p, *G).first : p);
        return out;
    };
    const auto P = reduced(a), Q = reduced(b);
    auto one_sided = [&](const std::vector<HPoint>& X, const std::vector<HPoint>& Y) {
        double worst = 1.0;  // cosh distance >= 1
        for (const auto& x : X) {
            double best = 1e300;
            for (const auto& y : Y) best = std::min(best, surface_cosh_distance(x, y, G));
            worst = std::max(worst, best);
        }
        return worst;
    };
    const double c = std::max(one_sided(P, Q), one_sided(Q, P));
    return std::acosh(std::max(1.0, c));
}

/// True iff the two critical loops are geometrically distinct: their point
/// sets on the surface differ beyond delta (time rotation, reversal and
/// iteration all leave the point set unchanged).
inline bool distinctness(const CriticalPoint& a, const CriticalPoint& b,
                         const MagneticSystem& sys, double delta = 1e-2) {
    return loop_hausdorff(a.loop, b.loop, sys.group) > delta;
}

// ---------------------------------------------------------------------------
// Minimax scan over an energy grid.

struct ScanCell {
    double k = 0.0;
    int n = 1;
    double c_n = 0.0;
    bool converged = false;
    double minimizer_value = 0.0;
    double argmax_residual = 0.0;
    double noise = 0.0;
};

struct ScanTable {
    std::vector<double> grid;
    std::vector<int> n_values;
    std::vector<ScanCell> cells;  // row-major: grid x n
    std::vector<std::string> monotonicity_violations;
    double bangert_slope = 0.0;   // affine fit of c_n vs n at the largest k
    bool bangert_decreasing = false;

    const ScanCell* cell(int ki, int ni) const {
        const size_t idx = static_cast<size_t>(ki) * n_values.size() + ni;
        return idx < cells.size() ? &cells[idx] : nullptr;
    }
};

/// Seed loop for the minimizer search: the best disc boundary of the
/// Taimanov family at this energy, counterclockwise, at speed sqrt(2k).
inline LoopPath minimizer_seed(const MagneticSystem& sys, double k, int N,
                               const TauPlusOptions& topt = {}) {
    const double rmax = detail::max_disc_radius(sys);
    double best_val = 1e300, best_r = 0.5 * rmax;
    for (int i = 1; i <= topt.radius_samples; ++i) {
        const double r = rmax * i / topt.radius_samples;
        auto region = TaimanovRegion::disc(
            circle_loop(sys.bump_center, r, topt.boundary_points, 1.0, true).pts);
        const double v = taimanov_Tk(region, sys, k, topt.fan_depth);
        if (v < best_val) {
            best_val = v;
            best_r = r;
        }
    }
    return circle_loop_at_energy(sys.bump_center, best_r, N, k, /*ccw=*/true);
}

/// Valley loop: an iterate of a verified negative-action loop, iterated
/// until it undercuts the minimizer value.
inline LoopPath valley_loop(const LoopPath& negative_loop, double S_negative, double S_min,
                            const MagneticSystem& sys) {
    if (!(S_negative < 0.0))
        throw std::invalid_argument("valley_loop: probe loop must have negative action");
    int m = 2;
    while (m * S_negative >= S_min && m < 64) ++m;
    return iterate_loop(negative_loop, m, sys.group);
}

/// Full minimax scan: per k find the local minimizer from the Taimanov
/// seed, build the valley, and run mountain_pass for each n. Cells that
/// fail to converge are flagged, never filled.
inline ScanTable scan_minimax(const std::vector<double>& grid, const std::vector<int>& n_values,
                              const MagneticSystem& sys, int N_points = 256,
                              const SearchOptions& opt = {}) {
    ScanTable table;
    table.grid = grid;
    table.n_values = n_values;
    table.cells.resize(grid.size() * n_values.size());
    if (grid.empty() || n_values.empty()) return table;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int gi = 0; gi < static_cast<int>(grid.size()); ++gi) {
        const double k = grid[gi];
        MagneticSystem sk = sys;
        sk.energy = k;
        LoopPath seed = minimizer_seed(sk, k, N_points);
        const ActionOptions aopt = opt.action();
        const double S_seed = action_value(seed, sk, k, aopt);
        MinimizeResult min = find_local_min(seed, sk, k, opt);
        const bool min_ok = min.cp.classification == PSClass::converged && min.cp.value < 0.0;
        LoopPath valley;
        if (min_ok) valley = valley_loop(seed, S_seed, min.cp.value, sk);
        for (int ni = 0; ni < static_cast<int>(n_values.size()); ++ni) {
            ScanCell& cell = table.cells[gi * n_values.size() + ni];
            cell.k = k;
            cell.n = n_values[ni];
            cell.minimizer_value = min.cp.value;
            if (!min_ok) {
                cell.converged = false;
                continue;
            }
            try {
                MountainPassResult mp = mountain_pass(min.cp, valley, cell.n, sk, k, opt);
                cell.c_n = mp.c_n;
                cell.converged = mp.converged;
                cell.argmax_residual = mp.saddle.ode_res;
                cell.noise = mp.noise;
            } catch (const std::exception&) {
                cell.converged = false;
            }
        }
    }

    // monotonicity audit per n over converged cells
    for (int ni = 0; ni < static_cast<int>(n_values.size()); ++ni) {
        for (size_t gi = 0; gi + 1 < grid.size(); ++gi) {
            const ScanCell* a = table.cell(gi, ni);
            const ScanCell* b = table.cell(gi + 1, ni);
            if (!a || !b || !a->converged || !b->converged) continue;
            const double slack = 1e-6 + a->noise + b->noise;
            if (b->c_n < a->c_n - slack)
                table.monotonicity_violations.push_back(
                    "n=" + std::to_string(a->n) + " k=" + std::to_string(a->k) + "->" +
                    std::to_string(b->k) + " c_n " + std::to_string(a->c_n) + "->" +
                    std::to_string(b->c_n));
        }
    }
    // Bangert trend at the largest k with all n converged
    for (int gi = static_cast<int>(grid.size()) - 1; gi >= 0; --gi) {
        std::vector<std::pair<double, double>> pts;
        for (int ni = 0; ni < static_cast<int>(n_values.size()); ++ni) {
            const ScanCell* c = table.cell(gi, ni);
            if (c && c->converged) pts.push_back({double(c->n), c->c_n});
        }
        if (pts.size() >= 2) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (auto [x, y] : pts) {
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            const double m = pts.size();
            table.bangert_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
            table.bangert_decreasing = table.bangert_slope < 0.0;
            break;
        }
    }
    return table;
}

}  // namespace maglab
