#ifndef HARDBALL_NEUTRAL_HPP
#define HARDBALL_NEUTRAL_HPP

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hardball/dynamics.hpp"

namespace hardball {

/// Neutral space of a trajectory segment: the configuration translations W
/// (within Z = {sum m_i W_i = 0}) that leave every velocity along the segment
/// unchanged to first order, together with the per-collision advances.
///
/// The computation is a nullspace problem in the unknowns (W, alpha_1..alpha_n):
///   (a) sum_i m_i W_i = 0,
///   (b) per collision k:  W^{k-1}_{i_k} - W^{k-1}_{j_k} = alpha_k (v^{k,-}_{i_k} - v^{k,-}_{j_k}),
/// where the translation propagates through collision k as
///   W^k = W^{k-1} + alpha_k (v^{k,+} - v^{k,-}).
/// Equation (b) says exactly that shifting the configuration moves the k-th
/// contact rigidly: the collision happens alpha_k earlier at the same normal,
/// so the outgoing velocities are untouched at first order.
struct NeutralResult {
    int dimension = 0;
    std::vector<Vec> basis;                      ///< W components, nu*N each
    std::vector<std::vector<double>> advances;   ///< per basis vector: alpha_1..alpha_n
    std::vector<double> singular_values;         ///< full constraint spectrum, descending
    double residual = 0.0;                       ///< max |M x|_inf over the basis
    double alpha_block_min_sv = 0.0;             ///< audit: alpha columns stay full rank
    std::size_t n_collisions = 0;
};

namespace detail {

/// Per-collision data the linear system needs: pair, relative pre-collision
/// velocity of the pair, and the full-velocity jump v_post - v_pre.
struct CollisionRow {
    Pair pair;
    Vec rel_pre;   // nu
    Vec jump;      // nu*N
};

inline std::vector<CollisionRow> collision_rows(const Trajectory& traj,
                                                const SystemParams& p) {
    std::vector<CollisionRow> rows;
    rows.reserve(traj.events.size());
    for (const CollisionEvent& ev : traj.events) {
        CollisionRow r;
        r.pair = ev.pair;
        r.rel_pre = ball(ev.v_pre, ev.pair.a, p.dim) - ball(ev.v_pre, ev.pair.b, p.dim);
        r.jump = ev.v_post - ev.v_pre;
        if (r.rel_pre.norm() < p.tangency_tol)
            throw DegenerateCollision(
                "relative pre-collision velocity below tolerance at collision " +
                std::to_string(rows.size() + 1));
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Constraint matrix in the unknowns (W, alpha_1..alpha_n), with W the
/// translation at the reference slot: reference_index = r0 places it between
/// collisions r0 and r0+1 (0 = segment start). Collisions after the reference
/// propagate forward, those before it backward; the neutral space dimension
/// is reference-independent (the bases are related by a linear bijection).
inline Mat constraint_matrix(const std::vector<CollisionRow>& rows,
                             const SystemParams& p, std::size_t reference_index) {
    const int nu = p.dim;
    const int N = p.n_balls;
    const std::size_t n = rows.size();
    const Eigen::Index n_unknowns = static_cast<Eigen::Index>(nu) * N +
                                    static_cast<Eigen::Index>(n);
    const Eigen::Index n_rows = nu + static_cast<Eigen::Index>(n) * nu;
    Mat M = Mat::Zero(n_rows, n_unknowns);

    // (a) momentum rows
    for (int c = 0; c < nu; ++c)
        for (int i = 0; i < N; ++i) M(c, i * nu + c) = p.masses[i];

    // (b) contact rows
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Index row0 = nu + static_cast<Eigen::Index>(k) * nu;
        const int ia = rows[k].pair.a - 1;
        const int ib = rows[k].pair.b - 1;
        for (int c = 0; c < nu; ++c) {
            M(row0 + c, ia * nu + c) += 1.0;
            M(row0 + c, ib * nu + c) -= 1.0;
            M(row0 + c, static_cast<Eigen::Index>(nu) * N + k) = -rows[k].rel_pre[c];
        }
        // accumulated jumps between the reference slot and collision k
        auto add_jump = [&](std::size_t l, double sign) {
            const Eigen::Index col = static_cast<Eigen::Index>(nu) * N + l;
            const Vec& d = rows[l].jump;
            for (int c = 0; c < nu; ++c)
                M(row0 + c, col) += sign * (d[ia * nu + c] - d[ib * nu + c]);
        };
        if (k + 1 > reference_index) {
            for (std::size_t l = reference_index; l < k; ++l) add_jump(l, +1.0);
        } else {
            for (std::size_t l = k; l < reference_index; ++l) add_jump(l, -1.0);
        }
    }
    return M;
}

} // namespace detail

/// Compute the neutral space of a nonsingular segment. The rank decision uses
/// the singular-value spectrum of the constraint matrix with the relative
/// threshold params.rank_tol; the full spectrum is returned so borderline
/// decisions stay auditable.
inline NeutralResult neutral_space(const Trajectory& traj, const SystemParams& p,
                                   std::size_t reference_index = 0) {
    if (!traj.nonsingular())
        throw SingularSegment(
            "segment contains flagged singular events; use both_branches_sufficient");
    const auto rows = detail::collision_rows(traj, p);
    if (reference_index > rows.size())
        throw RangeError("reference_index beyond the segment's collision count");

    const int nu = p.dim;
    const int N = p.n_balls;
    const std::size_t n = rows.size();
    const Mat M = detail::constraint_matrix(rows, p, reference_index);

    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv[0] : 0.0;
    const double thresh = p.rank_tol * (smax > 0.0 ? smax : 1.0);

    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > thresh) ++rank;

    NeutralResult res;
    res.n_collisions = n;
    res.singular_values.assign(sv.data(), sv.data() + sv.size());
    const Eigen::Index n_unknowns = M.cols();
    const Eigen::Index null_dim = n_unknowns - rank;
    res.dimension = static_cast<int>(null_dim);

    const Mat& V = svd.matrixV();
    for (Eigen::Index b = 0; b < null_dim; ++b) {
        const Vec x = V.col(n_unknowns - 1 - b);
        Vec W = x.head(static_cast<Eigen::Index>(nu) * N);
        std::vector<double> alpha(n);
        for (std::size_t k = 0; k < n; ++k)
            alpha[k] = x[static_cast<Eigen::Index>(nu) * N + k];
        res.residual = std::max(res.residual, (M * x).lpNorm<Eigen::Infinity>());
        res.basis.push_back(std::move(W));
        res.advances.push_back(std::move(alpha));
    }

    // The alpha unknowns must be determined by W (full-column-rank block);
    // a deficiency here means a degenerate collision slipped through.
    if (n > 0) {
        const Mat alpha_block = M.rightCols(static_cast<Eigen::Index>(n));
        Eigen::JacobiSVD<Mat> asvd(alpha_block);
        const Vec asv = asvd.singularValues();
        res.alpha_block_min_sv = asv[asv.size() - 1];
        if (res.alpha_block_min_sv <= thresh)
            throw DegenerateCollision(
                "advance unknowns are not determined by the translation (min sv " +
                full_digits(res.alpha_block_min_sv) + ")");
    }
    return res;
}

/// Advances solved sequentially for a given translation W at the segment
/// start: alpha_k is the least-squares fit of the contact condition at
/// collision k, exact when W is neutral. `max_residual` reports the worst
/// contact mismatch, nonzero for non-neutral W.
struct AdvanceSolve {
    std::vector<double> alphas;
    double max_residual = 0.0;
};

inline AdvanceSolve advances_of(const Trajectory& traj, const Vec& W,
                                const SystemParams& p) {
    const auto rows = detail::collision_rows(traj, p);
    AdvanceSolve out;
    Vec cur = W;
    for (const auto& r : rows) {
        const Vec rel = ball(cur, r.pair.a, p.dim) - ball(cur, r.pair.b, p.dim);
        const double alpha = rel.dot(r.rel_pre) / r.rel_pre.squaredNorm();
        out.max_residual =
            std::max(out.max_residual, (rel - alpha * r.rel_pre).norm());
        out.alphas.push_back(alpha);
        cur += alpha * r.jump;
    }
    return out;
}

/// The advance of the k-th collision (1-based) under translation W.
inline double advance_of(const Trajectory& traj, const Vec& W, std::size_t k,
                         const SystemParams& p) {
    if (k < 1 || k > traj.events.size())
        throw RangeError("advance_of: collision index out of range");
    return advances_of(traj, W, p).alphas[k - 1];
}

struct SufficiencyResult {
    bool sufficient = false;
    NeutralResult neutral;
};

/// A nonsingular segment is sufficient iff its neutral space has the minimal
/// dimension 1 (the flow direction only).
inline SufficiencyResult is_sufficient(const Trajectory& traj, const SystemParams& p) {
    SufficiencyResult r;
    r.neutral = neutral_space(traj, p);
    r.sufficient = (r.neutral.dimension == 1);
    return r;
}

/// Sufficiency across a simple singularity: every branch of the double
/// collision must be sufficient. The segment must have halted at exactly one
/// double collision of multiplicity two; each branch is extended by
/// `post_events` further collisions and tested.
inline bool both_branches_sufficient(const Trajectory& traj, std::size_t post_events,
                                     const SystemParams& p) {
    if (traj.pending_pairs.empty() || !traj.has_flag(SingularKind::double_collision))
        throw DomainError("segment does not end at a double collision");
    if (traj.singular_flags.size() != 1)
        throw SingularSegment("segment has singular events besides the double collision");
    if (traj.pending_pairs.size() > 2)
        throw UnsupportedMultiplicity("double collision of multiplicity " +
                                      std::to_string(traj.pending_pairs.size()));

    const std::vector<std::vector<Pair>> orders = {
        {traj.pending_pairs[0], traj.pending_pairs[1]},
        {traj.pending_pairs[1], traj.pending_pairs[0]}};

    std::vector<Vec> seen_velocities;
    for (const auto& order : orders) {
        auto [branch_state, branch_events] =
            detail::apply_ordering(traj.final_state, order, p);

        bool dup = false;
        for (const Vec& v : seen_velocities)
            if ((v - branch_state.vel).lpNorm<Eigen::Infinity>() <= 1e-12) dup = true;
        if (dup) continue;
        seen_velocities.push_back(branch_state.vel);

        // Assemble the branch segment: pre-singularity events, the ordered
        // simultaneous collisions, then the continuation. The neutral-space
        // system uses only pairs and velocities, so equal timestamps at the
        // singularity are harmless.
        Trajectory branch;
        branch.initial = traj.initial;
        branch.sequence.n_balls = p.n_balls;
        branch.events = traj.events;
        for (const CollisionEvent& ev : branch_events) branch.events.push_back(ev);

        if (post_events > 0) {
            SimulateOptions opt;
            opt.max_events = post_events;
            Trajectory cont = simulate(branch_state, opt, p);
            if (!cont.nonsingular())
                throw SingularSegment("branch continuation hit another singularity");
            for (const CollisionEvent& ev : cont.events) branch.events.push_back(ev);
        }
        for (const CollisionEvent& ev : branch.events)
            branch.sequence.labels.push_back(ev.pair);

        if (!is_sufficient(branch, p).sufficient) return false;
    }
    return true;
}

/// Finite-difference certificate for a neutral vector: rerun the segment from
/// the translated configuration Q + eps*W and return
/// |V_end(perturbed) - V_end(original)| / eps. For a true neutral vector the
/// endpoint velocity error is second order, so the result is O(eps).
inline double validate_neutral_fd(const Trajectory& traj, const Vec& W, double eps,
                                  const SystemParams& p) {
    if (traj.events.empty())
        throw DomainError("validate_neutral_fd needs a segment with collisions");
    PhaseState start = traj.initial;
    start.pos = torus_wrap(start.pos + eps * W, p.box);

    SimulateOptions opt;
    opt.max_events = traj.events.size();
    Trajectory pert = simulate(start, opt, p);
    if (pert.events.size() != traj.events.size())
        throw TopologyChange("perturbed run lost collisions (eps too large)");
    for (std::size_t k = 0; k < traj.events.size(); ++k)
        if (pert.events[k].pair != traj.events[k].pair)
            throw TopologyChange("perturbed run realizes a different symbolic sequence");

    const Vec& v_orig = traj.events.back().v_post;
    const Vec& v_pert = pert.events.back().v_post;
    return (v_pert - v_orig).norm() / eps;
}

// --- structured-text export -------------------------------------------------

inline void write_neutral_result(std::ostream& out, const NeutralResult& r) {
    out << "# neutral-space result\n";
    out << "dimension " << r.dimension << "\n";
    out << "n_collisions " << r.n_collisions << "\n";
    out << "residual " << full_digits(r.residual) << "\n";
    out << "alpha_block_min_sv " << full_digits(r.alpha_block_min_sv) << "\n";
    out << "singular_values";
    for (double s : r.singular_values) out << " " << full_digits(s);
    out << "\n";
    for (std::size_t b = 0; b < r.basis.size(); ++b) {
        out << "basis " << b + 1 << " w";
        for (Eigen::Index c = 0; c < r.basis[b].size(); ++c)
            out << " " << full_digits(r.basis[b][c]);
        out << "\n";
        out << "basis " << b + 1 << " advances";
        for (double a : r.advances[b]) out << " " << full_digits(a);
        out << "\n";
    }
}

} // namespace hardball

#endif
