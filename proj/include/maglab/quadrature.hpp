#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace maglab {

/// Quadrature node on the reference triangle {xi,eta >= 0, xi+eta <= 1},
/// weights summing to 1/2 (the reference area).
struct TriNode {
    double xi, eta, w;
};

/// Degree-5 seven-point rule (fully symmetric).
inline const std::array<TriNode, 7>& tri_rule_deg5() {
    static const double a1 = (6.0 + std::sqrt(15.0)) / 21.0;
    static const double a2 = (6.0 - std::sqrt(15.0)) / 21.0;
    static const double w1 = (155.0 + std::sqrt(15.0)) / 2400.0;
    static const double w2 = (155.0 - std::sqrt(15.0)) / 2400.0;
    static const std::array<TriNode, 7> rule = {{
        {1.0 / 3.0, 1.0 / 3.0, 9.0 / 80.0},
        {a1, a1, w1},
        {1.0 - 2.0 * a1, a1, w1},
        {a1, 1.0 - 2.0 * a1, w1},
        {a2, a2, w2},
        {1.0 - 2.0 * a2, a2, w2},
        {a2, 1.0 - 2.0 * a2, w2},
    }};
    return rule;
}

/// Seven-point rule refined by `depth` levels of uniform four-way
/// subdivision of the reference triangle. Weights still sum to 1/2.
inline std::vector<TriNode> tri_rule_subdivided(int depth) {
    std::vector<std::array<double, 6>> tris = {{0, 0, 1, 0, 0, 1}};  // (corner pairs)
    for (int level = 0; level < depth; ++level) {
        std::vector<std::array<double, 6>> next;
        next.reserve(tris.size() * 4);
        for (const auto& t : tris) {
            const double x0 = t[0], y0 = t[1], x1 = t[2], y1 = t[3], x2 = t[4], y2 = t[5];
            const double mx01 = 0.5 * (x0 + x1), my01 = 0.5 * (y0 + y1);
            const double mx12 = 0.5 * (x1 + x2), my12 = 0.5 * (y1 + y2);
            const double mx20 = 0.5 * (x2 + x0), my20 = 0.5 * (y2 + y0);
            next.push_back({x0, y0, mx01, my01, mx20, my20});
            next.push_back({mx01, my01, x1, y1, mx12, my12});
            next.push_back({mx20, my20, mx12, my12, x2, y2});
            next.push_back({mx01, my01, mx12, my12, mx20, my20});
        }
        tris.swap(next);
    }
    const auto& base = tri_rule_deg5();
    std::vector<TriNode> out;
    out.reserve(tris.size() * base.size());
    const double scale = 1.0 / static_cast<double>(tris.size());  // each sub-area = (1/2)/count
    for (const auto& t : tris) {
        for (const auto& n : base) {
            const double xi = t[0] + n.xi * (t[2] - t[0]) + n.eta * (t[4] - t[0]);
            const double eta = t[1] + n.xi * (t[3] - t[1]) + n.eta * (t[5] - t[1]);
            out.push_back({xi, eta, n.w * scale});
        }
    }
    return out;
}

/// Gauss-Legendre nodes/weights on [0,1].
struct GLRule {
    std::vector<double> x, w;
};

inline GLRule gauss_legendre01(int n) {
    GLRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        // Newton iteration from the Chebyshev-angle initial guess.
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (t * p0 - p1) / (t * t - 1.0);
            const double dt = p0 / pp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        r.x[i] = 0.5 * (1.0 - t);  // map [-1,1] -> [0,1], reversed order is harmless
        r.w[i] = 1.0 / ((1.0 - t * t) * pp * pp);
    }
    return r;
}

/// Integrate f over [a,b] with a cached 40-node rule.
template <typename F>
double integrate_gl(F&& f, double a, double b, int nodes = 40) {
    static thread_local int cached_n = 0;
    static thread_local GLRule rule;
    if (cached_n != nodes) {
        rule = gauss_legendre01(nodes);
        cached_n = nodes;
    }
    const double len = b - a;
    double acc = 0.0;
    for (size_t i = 0; i < rule.x.size(); ++i) acc += rule.w[i] * f(a + rule.x[i] * len);
    return acc * len;
}

}  // namespace maglab
