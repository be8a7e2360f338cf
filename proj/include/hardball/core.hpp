#ifndef HARDBALL_CORE_HPP
#define HARDBALL_CORE_HPP

#include <cmath>
#include <Eigen/Dense>

#include "hardball/errors.hpp"
#include "hardball/params.hpp"
#include "hardball/types.hpp"

namespace hardball {

using Vec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;
using Mat = Eigen::MatrixXd;

/// Positions and velocities of all balls at a time stamp. Layout is nu*N
/// flat vectors; ball `label` (1-based) occupies components
/// [(label-1)*nu, label*nu). Positions are absolute, wrapped into [0, L)^nu.
struct PhaseState {
    double time = 0.0;
    Vec pos;
    Vec vel;
};

inline Eigen::VectorBlock<Vec> ball(Vec& x, int label, int nu) {
    return x.segment((label - 1) * nu, nu);
}
inline Eigen::VectorBlock<const Vec> ball(const Vec& x, int label, int nu) {
    return x.segment((label - 1) * nu, nu);
}

/// Minimum-image reduction: the representative of x modulo L*Z^nu with every
/// component in [-L/2, L/2).
inline Vec torus_reduce(const Vec& x, double L) {
    Vec r(x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        double y = x[c] - L * std::floor(x[c] / L); // [0, L)
        if (y >= L / 2.0) y -= L;
        r[c] = y;
    }
    return r;
}

/// Wrap absolute coordinates into [0, L)^nu.
inline Vec torus_wrap(const Vec& x, double L) {
    Vec r(x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        double y = x[c] - L * std::floor(x[c] / L);
        if (y >= L) y -= L; // floor rounding can land exactly on L
        r[c] = y;
    }
    return r;
}

/// Distance between two points of the torus (minimum over lattice images).
inline double torus_distance(const Vec& qa, const Vec& qb, double L) {
    return torus_reduce(qa - qb, L).norm();
}

/// The mass inner product <u,w> = sum_i m_i <u_i, w_i> on nu*N vectors.
inline double mass_inner(const Vec& u, const Vec& w, const std::vector<double>& masses) {
    const int n = static_cast<int>(masses.size());
    const int nu = static_cast<int>(u.size()) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        s += masses[i] * u.segment(i * nu, nu).dot(w.segment(i * nu, nu));
    return s;
}

inline double mass_norm(const Vec& u, const std::vector<double>& masses) {
    return std::sqrt(mass_inner(u, u, masses));
}

/// Mass-metric orthogonal projection onto Z = {sum_i m_i v_i = 0}: subtracts
/// the mass-weighted mean from every ball. Idempotent.
inline Vec project_to_Z(const Vec& v, const std::vector<double>& masses) {
    const int n = static_cast<int>(masses.size());
    const int nu = static_cast<int>(v.size()) / n;
    double mtot = 0.0;
    Vec mean = Vec::Zero(nu);
    for (int i = 0; i < n; ++i) {
        mean += masses[i] * v.segment(i * nu, nu);
        mtot += masses[i];
    }
    mean /= mtot;
    Vec out = v;
    for (int i = 0; i < n; ++i) out.segment(i * nu, nu) -= mean;
    return out;
}

/// Rescale so the total kinetic energy (1/2) sum m_i |v_i|^2 equals 1/2.
inline Vec normalize_energy(const Vec& v, const std::vector<double>& masses) {
    const double twoE = mass_inner(v, v, masses); // 2E
    if (twoE <= 0.0 || !std::isfinite(twoE))
        throw ZeroVelocity("cannot normalize a zero velocity vector");
    return v / std::sqrt(twoE);
}

/// Radius of the base sphere of the (i,j) collision cylinder.
inline double base_radius(double m_i, double m_j, double r) {
    return 2.0 * r * std::sqrt(m_i * m_j / (m_i + m_j));
}

/// Base geometry of one pairwise collision cylinder. The generator subspace
/// is {q_i = q_j}; the base space is its mass-metric ortho-complement,
/// supported on balls i and j with m_i q_i + m_j q_j = 0.
struct PairGeometry {
    Pair pair;
    double base_radius = 0.0;
};

inline PairGeometry make_pair_geometry(const SystemParams& p, Pair pr) {
    return {pr, base_radius(p.masses[pr.a - 1], p.masses[pr.b - 1], p.radius)};
}

/// True iff no two balls overlap. Exact contact counts as admissible
/// (collision states live on the boundary); the contact tolerance absorbs
/// roundoff from event stepping.
inline bool check_admissible(const PhaseState& s, const SystemParams& p) {
    const int nu = p.dim;
    for (int i = 1; i <= p.n_balls; ++i)
        for (int j = i + 1; j <= p.n_balls; ++j) {
            const Vec d = torus_reduce(ball(s.pos, i, nu) - ball(s.pos, j, nu), p.box);
            if (d.norm() < 2.0 * p.radius - p.contact_tol()) return false;
        }
    return true;
}

/// Entry validation for simulation start states: admissible and on the
/// reduced energy/momentum shell.
inline void validate_state(const PhaseState& s, const SystemParams& p,
                           double tol = 1e-9) {
    if (s.pos.size() != p.dim * p.n_balls || s.vel.size() != p.dim * p.n_balls)
        throw DomainError("state size does not match params");
    const int nu = p.dim;
    Vec momentum = Vec::Zero(nu);
    for (int i = 1; i <= p.n_balls; ++i)
        momentum += p.masses[i - 1] * ball(s.vel, i, nu);
    if (momentum.lpNorm<Eigen::Infinity>() > tol)
        throw DomainError("state violates the zero-momentum reduction");
    if (std::abs(0.5 * mass_inner(s.vel, s.vel, p.masses) - 0.5) > tol)
        throw DomainError("state violates the unit kinetic-energy reduction");
    if (!check_admissible(s, p))
        throw DomainError("state has overlapping balls");
}

/// Velocities negated, positions kept; stays on the reduced shell.
inline PhaseState reverse(const PhaseState& s) {
    PhaseState r = s;
    r.vel = -s.vel;
    return r;
}

/// Free flight for tau, positions wrapped back into [0, L)^nu.
inline PhaseState advanced(const PhaseState& s, double tau, const SystemParams& p) {
    PhaseState out = s;
    out.time += tau;
    out.pos = torus_wrap(s.pos + tau * s.vel, p.box);
    return out;
}

} // namespace hardball

#endif
