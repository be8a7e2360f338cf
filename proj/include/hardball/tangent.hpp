#ifndef HARDBALL_TANGENT_HPP
#define HARDBALL_TANGENT_HPP

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hardball/dynamics.hpp"
#include "hardball/rng.hpp"

namespace hardball {

/// One tangent vector of the flow: (delta_q, delta_v), each nu*N. The
/// configuration part is unconstrained (positions are stored unfactorized, so
/// uniform translations live in the tangent space); the velocity part of an
/// on-shell frame satisfies sum_i m_i delta_v_i = 0 and <v, delta_v>_m = 0.
struct TangentVector {
    Vec dq;
    Vec dv;
};

struct TangentFrame {
    PhaseState base;
    std::vector<TangentVector> vectors;
};

/// Linearized free flight: dq += tau * dv, dv unchanged. Exact.
inline TangentVector tangent_step_free(const TangentVector& t, double tau) {
    return {t.dq + tau * t.dv, t.dv};
}

inline TangentFrame tangent_step_free(const TangentFrame& f, double tau,
                                      const SystemParams& p) {
    TangentFrame out;
    out.base = advanced(f.base, tau, p);
    out.vectors.reserve(f.vectors.size());
    for (const TangentVector& t : f.vectors) out.vectors.push_back(tangent_step_free(t, tau));
    return out;
}

/// Derivative of the instantaneous collision map at a recorded event. With
/// n the contact normal, dv_rel = v_i - v_j just before, and sigma the
/// first-order shift of the contact time,
///   sigma       = -<n, dq_i - dq_j> / <n, dv_rel>,
///   dq+         = dq + sigma * (v_pre - v_post),
///   contact dir dn = (dq_i - dq_j + sigma * dv_rel) / (2r),
/// and dv+ applies the reflection linearized in both the velocities and the
/// contact normal. The denominator <n, dv_rel> is the grazing margin; the
/// derivative blows up at tangencies.
inline TangentVector tangent_step_collision(const TangentVector& t,
                                            const CollisionEvent& ev,
                                            const SystemParams& p) {
    const int nu = p.dim;
    const double mi = p.masses[ev.pair.a - 1];
    const double mj = p.masses[ev.pair.b - 1];
    const double ci = 2.0 * mj / (mi + mj);
    const double cj = 2.0 * mi / (mi + mj);
    const Vec& n = ev.normal;

    const Vec dv_rel = ball(ev.v_pre, ev.pair.a, nu) - ball(ev.v_pre, ev.pair.b, nu);
    const double denom = n.dot(dv_rel);
    if (std::abs(denom) < p.tangency_tol)
        throw GrazingEvent("tangent map undefined at a grazing event (margin " +
                           full_digits(std::abs(denom)) + ")");

    const Vec dq_rel = ball(t.dq, ev.pair.a, nu) - ball(t.dq, ev.pair.b, nu);
    const double sigma = -n.dot(dq_rel) / denom;

    // configuration part: positions re-synchronized at the reference time
    TangentVector out;
    out.dq = t.dq + sigma * (ev.v_pre - ev.v_post);

    // velocity part: reflection at fixed normal ...
    const Vec ddv_rel = ball(t.dv, ev.pair.a, nu) - ball(t.dv, ev.pair.b, nu);
    out.dv = t.dv;
    ball(out.dv, ev.pair.a, nu) -= ci * ddv_rel.dot(n) * n;
    ball(out.dv, ev.pair.b, nu) += cj * ddv_rel.dot(n) * n;

    // ... plus the variation of the contact normal
    const Vec dn = (dq_rel + sigma * dv_rel) / (2.0 * p.radius);
    const double b = dv_rel.dot(n);
    const double db = dv_rel.dot(dn);
    ball(out.dv, ev.pair.a, nu) -= ci * (db * n + b * dn);
    ball(out.dv, ev.pair.b, nu) += cj * (db * n + b * dn);
    return out;
}

inline TangentFrame tangent_step_collision(const TangentFrame& f,
                                           const CollisionEvent& ev,
                                           const SystemParams& p) {
    TangentFrame out;
    out.base = f.base;
    out.base.vel = ev.v_post;
    out.vectors.reserve(f.vectors.size());
    for (const TangentVector& t : f.vectors)
        out.vectors.push_back(tangent_step_collision(t, ev, p));
    return out;
}

/// Canonical two-form in the mass metric:
///   omega(u, w) = <dq_u, dv_w>_m - <dq_w, dv_u>_m.
/// Free flight preserves it exactly; the collision derivative preserves it up
/// to roundoff (the flow is symplectic).
inline double symplectic_defect(const TangentVector& u, const TangentVector& w,
                                const std::vector<double>& masses) {
    return mass_inner(u.dq, w.dv, masses) - mass_inner(w.dq, u.dv, masses);
}

/// Composed analytic tangent map over a simulated segment, as a dense matrix
/// on the full (dq, dv) coordinates (2*nu*N square). Column order: dq then dv.
inline Mat tangent_map_matrix(const Trajectory& traj, double T,
                              const SystemParams& p) {
    const Eigen::Index m = 2 * static_cast<Eigen::Index>(p.dim) * p.n_balls;
    const Eigen::Index half = m / 2;
    Mat J(m, m);
    for (Eigen::Index col = 0; col < m; ++col) {
        TangentVector t{Vec::Zero(half), Vec::Zero(half)};
        if (col < half)
            t.dq[col] = 1.0;
        else
            t.dv[col - half] = 1.0;
        double t_now = traj.initial.time;
        for (const CollisionEvent& ev : traj.events) {
            if (ev.time > traj.initial.time + T) break;
            t = tangent_step_free(t, ev.time - t_now);
            t = tangent_step_collision(t, ev, p);
            t_now = ev.time;
        }
        t = tangent_step_free(t, traj.initial.time + T - t_now);
        J.col(col).head(half) = t.dq;
        J.col(col).tail(half) = t.dv;
    }
    return J;
}

/// Central-difference Jacobian of x -> S^T x in the full (q, v) coordinates.
/// Perturbed runs that realize a different symbolic sequence than the
/// unperturbed one raise TopologyChange. Position differences are taken
/// through the minimum image, so wrap seams do not corrupt columns.
inline Mat flow_jacobian_fd(const PhaseState& state, double T, double eps,
                            const SystemParams& p) {
    const Eigen::Index half = static_cast<Eigen::Index>(p.dim) * p.n_balls;
    const Eigen::Index m = 2 * half;

    SimulateOptions opt;
    opt.max_time = state.time + T;
    opt.validate_shell = false; // probe states sit deliberately off-shell

    auto run = [&](const PhaseState& s0) {
        Trajectory t = simulate(s0, opt, p);
        if (!t.nonsingular())
            throw TopologyChange("flow_jacobian_fd: singular event inside the window");
        return t;
    };
    const Trajectory ref = run(state);

    auto sequence_of = [](const Trajectory& t) {
        std::vector<Pair> s;
        for (const CollisionEvent& e : t.events) s.push_back(e.pair);
        return s;
    };
    const auto ref_seq = sequence_of(ref);

    Mat J(m, m);
    for (Eigen::Index col = 0; col < m; ++col) {
        PhaseState plus = state, minus = state;
        if (col < half) {
            plus.pos[col] += eps;
            minus.pos[col] -= eps;
            plus.pos = torus_wrap(plus.pos, p.box);
            minus.pos = torus_wrap(minus.pos, p.box);
        } else {
            plus.vel[col - half] += eps;
            minus.vel[col - half] -= eps;
        }
        Trajectory tp = run(plus), tm = run(minus);
        if (sequence_of(tp) != ref_seq || sequence_of(tm) != ref_seq)
            throw TopologyChange("flow_jacobian_fd: symbolic sequence changed under "
                                 "perturbation (reduce eps or move T)");
        const Vec dpos =
            torus_reduce(tp.final_state.pos - tm.final_state.pos, p.box) / (2.0 * eps);
        const Vec dvel = (tp.final_state.vel - tm.final_state.vel) / (2.0 * eps);
        J.col(col).head(half) = dpos;
        J.col(col).tail(half) = dvel;
    }
    return J;
}

namespace detail {

/// Combined mass-metric inner product on tangent vectors.
inline double tangent_inner(const TangentVector& u, const TangentVector& w,
                            const std::vector<double>& masses) {
    return mass_inner(u.dq, w.dq, masses) + mass_inner(u.dv, w.dv, masses);
}

/// Modified Gram-Schmidt in the combined mass metric. Returns the diagonal
/// stretch factors (the R diagonal of the QR factorization).
inline std::vector<double> orthonormalize(std::vector<TangentVector>& vs,
                                          const std::vector<double>& masses) {
    std::vector<double> diag(vs.size(), 0.0);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double c = tangent_inner(vs[i], vs[j], masses);
            vs[i].dq -= c * vs[j].dq;
            vs[i].dv -= c * vs[j].dv;
        }
        const double norm = std::sqrt(tangent_inner(vs[i], vs[i], masses));
        diag[i] = norm;
        vs[i].dq /= norm;
        vs[i].dv /= norm;
    }
    return diag;
}

/// Mass-orthonormal basis of the forbidden velocity directions (uniform
/// translations and the energy normal) at a state.
inline std::vector<Vec> forbidden_velocity_directions(const PhaseState& s,
                                                      const SystemParams& p) {
    const int nu = p.dim;
    const Eigen::Index half = static_cast<Eigen::Index>(nu) * p.n_balls;
    std::vector<Vec> forbidden;
    for (int c = 0; c < nu; ++c) {
        Vec u = Vec::Zero(half);
        for (int i = 0; i < p.n_balls; ++i) u[i * nu + c] = 1.0;
        forbidden.push_back(u);
    }
    forbidden.push_back(s.vel);
    for (std::size_t i = 0; i < forbidden.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j)
            forbidden[i] -=
                mass_inner(forbidden[i], forbidden[j], p.masses) * forbidden[j];
        forbidden[i] /= mass_norm(forbidden[i], p.masses);
    }
    return forbidden;
}

/// Remove velocity components along the conserved-quantity gradients. The
/// dynamics preserves the constraint subspace exactly, but roundoff injects
/// gradient components that grow polynomially and would bury the contracting
/// modes; re-projecting at each renormalization keeps the frame on-shell.
inline void project_frame_constraints(std::vector<TangentVector>& frame,
                                      const PhaseState& s, const SystemParams& p) {
    const auto forbidden = forbidden_velocity_directions(s, p);
    for (TangentVector& t : frame)
        for (const Vec& f : forbidden)
            t.dv -= mass_inner(t.dv, f, p.masses) * f;
}

/// On-shell tangent basis at a state: all nu*N configuration directions plus
/// the (nu*N - nu - 1)-dimensional velocity complement of the momentum
/// constraints and the energy sphere.
inline std::vector<TangentVector> reduced_basis(const PhaseState& s,
                                                const SystemParams& p) {
    const int nu = p.dim;
    const Eigen::Index half = static_cast<Eigen::Index>(nu) * p.n_balls;
    std::vector<TangentVector> basis;

    for (Eigen::Index c = 0; c < half; ++c) {
        TangentVector t{Vec::Zero(half), Vec::Zero(half)};
        t.dq[c] = 1.0;
        basis.push_back(std::move(t));
    }

    const auto forbidden = forbidden_velocity_directions(s, p);

    std::vector<Vec> vbasis;
    for (Eigen::Index c = 0; c < half && static_cast<int>(vbasis.size()) <
                                             static_cast<int>(half) - nu - 1;
         ++c) {
        Vec u = Vec::Zero(half);
        u[c] = 1.0;
        for (const Vec& f : forbidden) u -= mass_inner(u, f, p.masses) * f;
        for (const Vec& v : vbasis) u -= mass_inner(u, v, p.masses) * v;
        const double norm = mass_norm(u, p.masses);
        if (norm < 1e-8) continue;
        vbasis.push_back(u / norm);
    }
    for (const Vec& v : vbasis) {
        TangentVector t{Vec::Zero(half), v};
        basis.push_back(std::move(t));
    }
    return basis;
}

} // namespace detail

struct LyapunovExponent {
    double value = 0.0;
    double stderr_ = 0.0;
};

struct LyapunovSpectrum {
    std::vector<LyapunovExponent> exponents; ///< sorted descending
    std::size_t n_events = 0;
    double total_time = 0.0;
    std::size_t renorm_every = 1;
    std::size_t burn_in_events = 0;
    int zero_modes_expected = 0; ///< flow direction + nu translations
    int resampled_trajectories = 0;
};

/// Benettin-style spectrum estimate: propagate a full on-shell frame through
/// the event sequence, re-orthonormalizing in the mass metric every K events;
/// exponents are time-normalized sums of log stretches. Standard errors come
/// from a block bootstrap (50 blocks) over the per-renormalization increments,
/// since consecutive collisions are serially correlated. A trajectory that
/// hits a flagged singularity is discarded and resampled from a derived seed.
inline LyapunovSpectrum lyapunov_spectrum(const PhaseState& state0,
                                          std::size_t n_events,
                                          std::size_t renorm_every,
                                          const SystemParams& p,
                                          std::uint64_t bootstrap_seed = 12345,
                                          std::size_t burn_in = 0) {
    if (renorm_every == 0) renorm_every = 1;
    if (burn_in == 0) burn_in = n_events / 10;

    SimulateOptions opt;
    opt.max_events = n_events;
    Trajectory traj = simulate(state0, opt, p);
    int resampled = 0;
    Rng resample_rng(bootstrap_seed);
    while (!traj.nonsingular()) {
        // flagged singularity: restart from a jittered admissible state
        ++resampled;
        if (resampled > 64)
            throw SingularSegment("lyapunov_spectrum: persistent singular trajectories");
        PhaseState s = traj.initial;
        Vec jitter(s.vel.size());
        for (Eigen::Index c = 0; c < jitter.size(); ++c)
            jitter[c] = resample_rng.normal();
        s.vel = normalize_energy(project_to_Z(s.vel + 1e-6 * jitter, p.masses),
                                 p.masses);
        traj = simulate(s, opt, p);
    }

    std::vector<TangentVector> frame = detail::reduced_basis(traj.initial, p);
    const std::size_t n_vec = frame.size();
    detail::orthonormalize(frame, p.masses);

    std::vector<std::vector<double>> increments; // per renorm: log stretches
    std::vector<double> increment_times;

    double t_now = traj.initial.time;
    double t_last_renorm = t_now;
    std::size_t since_renorm = 0;

    for (std::size_t k = 0; k < traj.events.size(); ++k) {
        const CollisionEvent& ev = traj.events[k];
        const double tau = ev.time - t_now;
        for (TangentVector& t : frame) t = tangent_step_free(t, tau);
        for (TangentVector& t : frame) t = tangent_step_collision(t, ev, p);
        t_now = ev.time;
        if (++since_renorm >= renorm_every || k + 1 == traj.events.size()) {
            PhaseState here = traj.initial;
            here.vel = ev.v_post;
            detail::project_frame_constraints(frame, here, p);
            const auto diag = detail::orthonormalize(frame, p.masses);
            if (k + 1 > burn_in) { // burn-in renormalizations are discarded
                std::vector<double> logs(n_vec);
                for (std::size_t i = 0; i < n_vec; ++i) logs[i] = std::log(diag[i]);
                increments.push_back(std::move(logs));
                increment_times.push_back(t_now - t_last_renorm);
            }
            t_last_renorm = t_now;
            since_renorm = 0;
        }
    }

    if (increments.empty())
        throw DomainError("lyapunov_spectrum: no post-burn-in renormalizations");

    double total_time = 0.0;
    for (double dt : increment_times) total_time += dt;
    std::vector<double> sums(n_vec, 0.0);
    for (const auto& inc : increments)
        for (std::size_t i = 0; i < n_vec; ++i) sums[i] += inc[i];

    // block bootstrap over contiguous blocks of renormalization increments
    const std::size_t n_blocks = std::min<std::size_t>(50, increments.size());
    std::vector<std::vector<double>> block_sums(n_blocks,
                                                std::vector<double>(n_vec, 0.0));
    std::vector<double> block_times(n_blocks, 0.0);
    for (std::size_t r = 0; r < increments.size(); ++r) {
        const std::size_t b = r * n_blocks / increments.size();
        for (std::size_t i = 0; i < n_vec; ++i) block_sums[b][i] += increments[r][i];
        block_times[b] += increment_times[r];
    }
    const int n_boot = 200;
    Rng rng(bootstrap_seed);
    std::vector<std::vector<double>> boot(n_vec);
    for (int rep = 0; rep < n_boot; ++rep) {
        std::vector<double> s(n_vec, 0.0);
        double t = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const std::size_t pick = rng.below(n_blocks);
            for (std::size_t i = 0; i < n_vec; ++i) s[i] += block_sums[pick][i];
            t += block_times[pick];
        }
        for (std::size_t i = 0; i < n_vec; ++i) boot[i].push_back(s[i] / t);
    }

    LyapunovSpectrum out;
    out.n_events = traj.events.size();
    out.total_time = total_time;
    out.renorm_every = renorm_every;
    out.burn_in_events = burn_in;
    out.zero_modes_expected = p.dim + 1;
    out.resampled_trajectories = resampled;
    for (std::size_t i = 0; i < n_vec; ++i) {
        double mean = 0.0;
        for (double x : boot[i]) mean += x;
        mean /= n_boot;
        double var = 0.0;
        for (double x : boot[i]) var += (x - mean) * (x - mean);
        var /= (n_boot - 1);
        out.exponents.push_back({sums[i] / total_time, std::sqrt(var)});
    }
    std::sort(out.exponents.begin(), out.exponents.end(),
              [](const LyapunovExponent& x, const LyapunovExponent& y) {
                  return x.value > y.value;
              });
    return out;
}

inline void write_spectrum(std::ostream& out, const LyapunovSpectrum& spec,
                           const SystemParams& p, std::uint64_t seed) {
    out << "# lyapunov spectrum; columns: exponent stderr\n";
    out << "# params: n_balls " << p.n_balls << " dim " << p.dim << " radius "
        << full_digits(p.radius) << " box " << full_digits(p.box) << " masses";
    for (double m : p.masses) out << " " << full_digits(m);
    out << "\n";
    out << "# seed " << seed << " n_events " << spec.n_events << " renorm_every "
        << spec.renorm_every << " burn_in_events " << spec.burn_in_events
        << " total_time " << full_digits(spec.total_time)
        << " zero_modes_expected " << spec.zero_modes_expected
        << " resampled " << spec.resampled_trajectories << "\n";
    for (const auto& e : spec.exponents)
        out << full_digits(e.value) << " " << full_digits(e.stderr_) << "\n";
}

} // namespace hardball

#endif
