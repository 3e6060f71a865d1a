#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "maglab/geometry.hpp"

// Genus-2 surface as the quotient of H by the regular-octagon group: the
// Dirichlet domain centered at i is the regular hyperbolic octagon with
// vertex angle pi/4, opposite sides paired by translations through the
// center. Matrices are built in the Poincare disk (SU(1,1)) and converted
// to SL(2,R) by the Cayley map.

namespace maglab {

struct reduction_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One letter of a deck-transformation word: generator index 0..3, or its
/// inverse when inverse = true.
struct DeckLetter {
    int index = 0;
    bool inverse = false;
};

using DeckWord = std::vector<DeckLetter>;

struct FuchsianGenus2 {
    /// Side pairings: gen[j] translates across the j-th pair of opposite
    /// sides (j = 0..3); the full list of neighbor moves is gen and inverses.
    std::array<Isometry, 4> gen;
    /// Relator word; evaluates to the identity in PSL(2,R).
    std::vector<DeckLetter> relator;
    /// Center of the Dirichlet domain.
    HPoint center{0.0, 1.0};
    /// Distance from the center to an edge midpoint (in-radius).
    double apothem = 0.0;
    /// Distance from the center to a vertex.
    double circumradius = 0.0;
    /// Images of the center under the 8 neighbor moves, cached for the
    /// Dirichlet inside test.
    std::array<HPoint, 8> neighbor_centers;

    Isometry letter(const DeckLetter& l) const {
        return l.inverse ? gen[l.index].inverse() : gen[l.index];
    }

    Isometry word(const DeckWord& w) const {
        Isometry m = Isometry::identity();
        for (const auto& l : w) m = m * letter(l);
        return m;
    }

    /// Neighbor move 0..7: even = gen[j], odd = gen[j]^-1 for j = move/2.
    Isometry neighbor(int move) const {
        return (move % 2 == 0) ? gen[move / 2] : gen[move / 2].inverse();
    }
    static DeckLetter neighbor_letter(int move) { return DeckLetter{move / 2, move % 2 != 0}; }

    /// Dirichlet test: p is in the closed fundamental octagon iff it is at
    /// least as close to the center as to every neighbor center.
    bool in_domain(const HPoint& p, double slack = 0.0) const {
        const double c0 = cosh_distance(p, center);
        for (const auto& nc : neighbor_centers)
            if (cosh_distance(p, nc) < c0 - slack) return false;
        return true;
    }
};

namespace detail {

/// Convert an SU(1,1) disk matrix [[alpha, beta],[conj(beta), conj(alpha)]]
/// to SL(2,R) acting on H. Conjugating by the Cayley map C(z) = (z-i)/(z+i)
/// gives the real matrix [[Re(a+b), Im(a-b)], [-Im(a+b), Re(a-b)]].
inline Isometry su11_to_sl2r(cplx alpha, cplx beta) {
    return Isometry{alpha.real() + beta.real(), alpha.imag() - beta.imag(),
                    -alpha.imag() - beta.imag(), alpha.real() - beta.real()}
        .normalized();
}

}  // namespace detail

/// Side pairings of the regular hyperbolic octagon with vertex angle pi/4.
/// gen[j] translates by twice the apothem along disk direction j*pi/4.
inline FuchsianGenus2 octagon_group() {
    FuchsianGenus2 G;
    const double cot_pi8 = 1.0 / std::tan(std::numbers::pi / 8.0);
    G.apothem = std::acosh(cot_pi8);
    G.circumradius = std::acosh(cot_pi8 * cot_pi8);
    G.center = HPoint{0.0, 1.0};

    const double ell = 2.0 * G.apothem;  // translation length
    const double ch = std::cosh(0.5 * ell), sh = std::sinh(0.5 * ell);
    for (int j = 0; j < 4; ++j) {
        const double phi = j * std::numbers::pi / 4.0;
        // R_phi T R_phi^-1 in SU(1,1): alpha = cosh, beta = e^{i phi} sinh.
        const cplx alpha{ch, 0.0};
        const cplx beta = sh * std::exp(cplx(0.0, phi));
        G.gen[j] = detail::su11_to_sl2r(alpha, beta);
    }

    // Vertex-cycle relator: g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3.
    G.relator = {DeckLetter{0, false}, DeckLetter{1, true},  DeckLetter{2, false},
                 DeckLetter{3, true},  DeckLetter{0, true},  DeckLetter{1, false},
                 DeckLetter{2, true},  DeckLetter{3, false}};

    for (int m = 0; m < 8; ++m) G.neighbor_centers[m] = G.neighbor(m).apply(G.center);

    const double res = G.word(G.relator).residual_to_identity();
    if (res > 1e-8)
        throw std::runtime_error("octagon_group: relator residual " + std::to_string(res));
    for (const auto& g : G.gen)
        if (std::abs(g.trace()) <= 2.0)
            throw std::runtime_error("octagon_group: generator is not hyperbolic");
    return G;
}

/// Reduce p into the closed fundamental octagon. Returns the domain
/// representative and the word w with representative = w(p). Greedy descent
/// on the distance to the center; each applied move strictly decreases it.
inline std::pair<HPoint, DeckWord> reduce_to_domain(const HPoint& p, const FuchsianGenus2& G,
                                                    int max_moves = 256) {
    require_upper(p, "reduce_to_domain");
    HPoint q = p;
    DeckWord word;
    for (int iter = 0; iter < max_moves; ++iter) {
        double best = cosh_distance(q, G.center);
        int best_move = -1;
        for (int m = 0; m < 8; ++m) {
            const double c = cosh_distance(q, G.neighbor_centers[m]);
            if (c < best * (1.0 - 1e-15)) {
                best = c;
                best_move = m;
            }
        }
        if (best_move < 0) return {q, word};
        // d(q, g c) < d(q, c)  =>  g^-1 q is closer to the center.
        const int inv_move = (best_move % 2 == 0) ? best_move + 1 : best_move - 1;
        q = G.neighbor(inv_move).apply(q);
        word.push_back(FuchsianGenus2::neighbor_letter(inv_move));
    }
    throw reduction_error("reduce_to_domain: move cap exceeded");
}

}  // namespace maglab
