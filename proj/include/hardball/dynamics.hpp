#ifndef HARDBALL_DYNAMICS_HPP
#define HARDBALL_DYNAMICS_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hardball/core.hpp"
#include "hardball/io.hpp"
#include "hardball/symbolic.hpp"

namespace hardball {

/// One elastic collision. `lattice` is the integer image vector a_k through
/// which contact occurs: |(q_i - q_j) - L*a_k| = 2r at time t_k, with q taken
/// from the wrapped positions at the event. `normal` is the Euclidean unit
/// vector from ball j to ball i at contact. v_pre/v_post are the full nu*N
/// velocity vectors around the event.
struct CollisionEvent {
    double time = 0.0;
    Pair pair;
    IVec lattice;
    Vec normal;
    Vec v_pre;
    Vec v_post;
    double grazing_margin = 0.0; ///< |<dv_pre, n>|, singularity diagnostic
};

enum class SingularKind { tangential, double_collision };

struct SingularFlag {
    std::size_t event_index = 0; ///< 1-based; for a double event: events.size()+1
    SingularKind kind = SingularKind::tangential;
};

/// A simulated segment: initial state, events in time order, the symbolic
/// sequence, singularity flags, and the smallest inter-collision gap seen.
/// When simulation halts at a double collision, `final_state` is the state at
/// the contact instant (no reflection applied) and `pending_pairs` holds the
/// simultaneous pairs for branch enumeration.
struct Trajectory {
    PhaseState initial;
    std::vector<CollisionEvent> events;
    SymbolicSequence sequence;
    std::vector<SingularFlag> singular_flags;
    double min_gap = std::numeric_limits<double>::infinity();
    PhaseState final_state;
    std::vector<Pair> pending_pairs;

    bool has_flag(SingularKind kind) const {
        for (const auto& f : singular_flags)
            if (f.kind == kind) return true;
        return false;
    }
    bool nonsingular() const { return singular_flags.empty(); }
};

/// Candidate contact for one pair: flight time, lattice image, unit normal.
struct PairContact {
    double tau = 0.0;
    IVec lattice;
    Vec normal;
};

/// Earliest contact of the pair (i,j) within `horizon`, searching every
/// lattice image reachable under the bound |dq - L*a| <= 2r + horizon*|dv|.
/// The entering (smaller) root of each quadratic is selected; only strictly
/// positive roots count, so a pair leaving contact is never re-picked.
inline std::optional<PairContact> next_pair_collision(const PhaseState& s, Pair pr,
                                                      double horizon,
                                                      const SystemParams& p) {
    const int nu = p.dim;
    const double L = p.box;
    const double twor = 2.0 * p.radius;

    const Vec dq = ball(s.pos, pr.a, nu) - ball(s.pos, pr.b, nu);
    const Vec dv = ball(s.vel, pr.a, nu) - ball(s.vel, pr.b, nu);
    const double dv2 = dv.squaredNorm();
    if (dv2 == 0.0) return std::nullopt;

    const double reach = twor + horizon * std::sqrt(dv2);
    std::vector<int> lo(nu), hi(nu);
    for (int c = 0; c < nu; ++c) {
        lo[c] = static_cast<int>(std::ceil((dq[c] - reach) / L));
        hi[c] = static_cast<int>(std::floor((dq[c] + reach) / L));
    }

    std::optional<PairContact> best;
    IVec a = IVec::Zero(nu);
    for (int c = 0; c < nu; ++c) a[c] = lo[c];
    while (true) {
        Vec d(nu);
        for (int c = 0; c < nu; ++c) d[c] = dq[c] - L * a[c];
        const double b = d.dot(dv);
        // b >= 0: receding from this image, the entering root is not positive.
        if (b < 0.0 && d.squaredNorm() <= reach * reach) {
            const double cc = d.squaredNorm() - twor * twor;
            const double disc = b * b - dv2 * cc;
            if (disc >= 0.0) {
                double tau = cc / (-b + std::sqrt(disc)); // stable smaller root
                // A state sitting exactly at contact (time reversal from a
                // post-collision state, branch resumption) carries a contact
                // residual of either sign; clamp those roots to an immediate
                // collision instead of tunneling.
                if (tau <= 0.0 && cc <= 0.0 && cc >= -4.0 * twor * p.contact_tol())
                    tau = 0.0;
                if (tau >= 0.0 && tau <= horizon && (!best || tau < best->tau)) {
                    Vec contact = d + tau * dv;
                    best = PairContact{tau, a, contact / contact.norm()};
                }
            }
        }
        // advance the multi-index
        int c = 0;
        while (c < nu) {
            if (a[c] < hi[c]) {
                ++a[c];
                break;
            }
            a[c] = lo[c];
            ++c;
        }
        if (c == nu) break;
    }
    return best;
}

/// The global minimum over all pairs, plus every other pair whose collision
/// time falls within simultaneity_tol of it (double-collision detection).
struct EventDraft {
    Pair pair;
    PairContact contact;
    std::vector<Pair> simultaneous; ///< other pairs within the tolerance window
};

inline std::optional<EventDraft> next_event(const PhaseState& s, double horizon,
                                            const SystemParams& p) {
    std::optional<EventDraft> best;
    std::vector<std::pair<Pair, double>> times;
    for (int i = 1; i <= p.n_balls; ++i)
        for (int j = i + 1; j <= p.n_balls; ++j) {
            const Pair pr(i, j);
            if (auto c = next_pair_collision(s, pr, horizon, p)) {
                times.emplace_back(pr, c->tau);
                if (!best || c->tau < best->contact.tau)
                    best = EventDraft{pr, *c, {}};
            }
        }
    if (!best) return std::nullopt;
    for (const auto& [pr, tau] : times)
        if (pr != best->pair && tau - best->contact.tau <= p.simultaneity_tol)
            best->simultaneous.push_back(pr);
    return best;
}

/// Elastic reflection of the pair (i,j) with contact normal n (unit, from j
/// to i). The impulse form below is the mass-metric orthogonal reflection
/// across the tangent hyperplane of the collision cylinder:
///   v_i' = v_i - (2 m_j / (m_i + m_j)) <v_i - v_j, n> n
///   v_j' = v_j + (2 m_i / (m_i + m_j)) <v_i - v_j, n> n
inline PhaseState apply_collision(const PhaseState& s, Pair pr, const Vec& n,
                                  const SystemParams& p) {
    const int nu = p.dim;
    const double mi = p.masses[pr.a - 1];
    const double mj = p.masses[pr.b - 1];
    const double b = (ball(s.vel, pr.a, nu) - ball(s.vel, pr.b, nu)).dot(n);
    if (b >= 0.0)
        throw NotApproaching("apply_collision: pair is not approaching (<dv,n> = " +
                             full_digits(b) + ")");
    PhaseState out = s;
    ball(out.vel, pr.a, nu) -= (2.0 * mj / (mi + mj)) * b * n;
    ball(out.vel, pr.b, nu) += (2.0 * mi / (mi + mj)) * b * n;
    return out;
}

struct SimulateOptions {
    std::size_t max_events = 0;   ///< 0 = unlimited
    double max_time = std::numeric_limits<double>::infinity();
    double horizon = 0.0;         ///< 0 = auto: L / (2 * max ball speed)
    double accumulation_floor = 0.0; ///< min_gap below this throws; 0 disables
    std::size_t admissibility_check_every = 256;
    /// Require the start state on the reduced shell (I = 0, E = 1/2). Finite
    /// difference probes run deliberately off-shell and switch this off.
    bool validate_shell = true;
};

namespace detail {

inline double max_ball_speed(const PhaseState& s, const SystemParams& p) {
    double vmax = 0.0;
    for (int i = 1; i <= p.n_balls; ++i)
        vmax = std::max(vmax, ball(s.vel, i, p.dim).norm());
    return vmax;
}

/// Lattice image of the contact in the wrapped coordinates at event time,
/// recovered from |dq - L*a - 2r*n| ~ 0.
inline IVec contact_image(const Vec& dq, const Vec& n, const SystemParams& p) {
    IVec a(p.dim);
    for (int c = 0; c < p.dim; ++c)
        a[c] = static_cast<int>(std::lround((dq[c] - 2.0 * p.radius * n[c]) / p.box));
    return a;
}

inline Vec total_momentum(const PhaseState& s, const SystemParams& p) {
    Vec momentum = Vec::Zero(p.dim);
    for (int i = 1; i <= p.n_balls; ++i)
        momentum += p.masses[i - 1] * ball(s.vel, i, p.dim);
    return momentum;
}

/// Drift is measured against the start-state invariants, so off-shell probe
/// runs are held to the same 1e-6 budget as reduced ones.
inline void check_conservation(const PhaseState& s, double energy0,
                               const Vec& momentum0, const SystemParams& p) {
    const double e_err =
        std::abs(0.5 * mass_inner(s.vel, s.vel, p.masses) - energy0);
    const double i_err = (total_momentum(s, p) - momentum0).norm();
    if (e_err > 1e-6 || i_err > 1e-6)
        throw ConservationDrift("conservation drift: |E-E0|=" + full_digits(e_err) +
                                ", |I-I0|=" + full_digits(i_err));
}

} // namespace detail

/// Event-driven flow: alternate free flight and elastic reflection, recording
/// every collision. Tangential events (grazing margin below tangency_tol) are
/// reflected through and flagged. At a double collision the simulation stops
/// at the contact instant with the reflection NOT applied; the simultaneous
/// pairs are surfaced in `pending_pairs` for enumerate_branches.
inline Trajectory simulate(const PhaseState& state0, const SimulateOptions& opt,
                           const SystemParams& p) {
    p.validate();
    if (opt.validate_shell) {
        validate_state(state0, p);
    } else {
        if (state0.pos.size() != p.dim * p.n_balls ||
            state0.vel.size() != p.dim * p.n_balls)
            throw DomainError("state size does not match params");
        if (!check_admissible(state0, p))
            throw DomainError("state has overlapping balls");
    }
    if (opt.max_events == 0 && !std::isfinite(opt.max_time))
        throw DomainError("simulate needs a stop condition (max_events or max_time)");

    Trajectory traj;
    traj.initial = state0;
    traj.sequence.n_balls = p.n_balls;

    PhaseState s = state0;
    const double energy0 = 0.5 * mass_inner(s.vel, s.vel, p.masses);
    const Vec momentum0 = detail::total_momentum(s, p);
    double last_event_time = std::numeric_limits<double>::quiet_NaN();

    while (true) {
        if (opt.max_events > 0 && traj.events.size() >= opt.max_events) break;
        const double remaining = opt.max_time - s.time;
        if (remaining <= 0.0) break;

        double horizon = opt.horizon;
        if (horizon <= 0.0) {
            const double vmax = detail::max_ball_speed(s, p);
            if (vmax == 0.0) { // frozen system: free "flight" to the stop time
                if (!std::isfinite(remaining))
                    throw DomainError("simulate: zero velocities and no time bound");
                s = advanced(s, remaining, p);
                break;
            }
            horizon = p.box / (2.0 * vmax);
        }

        auto draft = next_event(s, horizon, p);
        if (!draft) {
            s = advanced(s, std::min(horizon, remaining), p);
            continue;
        }
        if (draft->contact.tau > remaining) {
            s = advanced(s, remaining, p);
            break;
        }

        s = advanced(s, draft->contact.tau, p);

        if (!draft->simultaneous.empty()) {
            traj.singular_flags.push_back(
                {traj.events.size() + 1, SingularKind::double_collision});
            traj.pending_pairs.push_back(draft->pair);
            for (const Pair& pr : draft->simultaneous) traj.pending_pairs.push_back(pr);
            break;
        }

        const Pair pr = draft->pair;
        const Vec& n = draft->contact.normal;
        const Vec dq = ball(s.pos, pr.a, p.dim) - ball(s.pos, pr.b, p.dim);
        const double approach =
            (ball(s.vel, pr.a, p.dim) - ball(s.vel, pr.b, p.dim)).dot(n);

        const double margin = std::abs(approach);
        CollisionEvent ev;
        ev.time = s.time;
        ev.pair = pr;
        ev.lattice = detail::contact_image(dq, n, p);
        ev.normal = n;
        ev.v_pre = s.vel;
        ev.grazing_margin = margin;

        if (approach < 0.0) {
            s = apply_collision(s, pr, n, p);
        } // else: exactly tangential, zero impulse; velocities unchanged
        ev.v_post = s.vel;

        traj.events.push_back(std::move(ev));
        traj.sequence.labels.push_back(pr);
        if (margin < p.tangency_tol)
            traj.singular_flags.push_back(
                {traj.events.size(), SingularKind::tangential});

        if (!std::isnan(last_event_time)) {
            const double gap = s.time - last_event_time;
            traj.min_gap = std::min(traj.min_gap, gap);
            if (opt.accumulation_floor > 0.0 && gap < opt.accumulation_floor)
                throw AccumulationSuspected(
                    "inter-collision gap " + full_digits(gap) +
                    " below configured floor " + full_digits(opt.accumulation_floor));
        }
        last_event_time = s.time;

        detail::check_conservation(s, energy0, momentum0, p);
        if (opt.admissibility_check_every > 0 &&
            traj.events.size() % opt.admissibility_check_every == 0 &&
            !check_admissible(s, p))
            throw Error("admissibility lost during simulation (missed collision)");
    }

    traj.final_state = s;
    return traj;
}

namespace detail {

/// Apply the given collisions in order from a state where each pair is at
/// contact. A pair that is no longer approaching after an earlier reflection
/// is skipped (that ordering realizes only the first collision).
inline std::pair<PhaseState, std::vector<CollisionEvent>>
apply_ordering(const PhaseState& s0, const std::vector<Pair>& order,
               const SystemParams& p) {
    PhaseState s = s0;
    std::vector<CollisionEvent> evs;
    for (const Pair& pr : order) {
        const Vec d =
            torus_reduce(ball(s.pos, pr.a, p.dim) - ball(s.pos, pr.b, p.dim), p.box);
        const Vec n = d / d.norm();
        const double approach =
            (ball(s.vel, pr.a, p.dim) - ball(s.vel, pr.b, p.dim)).dot(n);
        if (approach >= 0.0) continue;
        CollisionEvent ev;
        ev.time = s.time;
        ev.pair = pr;
        ev.lattice = contact_image(ball(s.pos, pr.a, p.dim) - ball(s.pos, pr.b, p.dim),
                                   n, p);
        ev.normal = n;
        ev.v_pre = s.vel;
        s = apply_collision(s, pr, n, p);
        ev.v_post = s.vel;
        ev.grazing_margin = std::abs(approach);
        evs.push_back(std::move(ev));
    }
    return {s, evs};
}

} // namespace detail

/// Post-collision states for each time-ordering of a double collision.
/// Disjoint pairs commute, so the two orderings deduplicate to one state;
/// pairs sharing a ball generally give two distinct continuations.
inline std::vector<PhaseState> enumerate_branches(const PhaseState& at_contact,
                                                  const std::vector<Pair>& pairs,
                                                  const SystemParams& p) {
    if (pairs.size() > 2)
        throw UnsupportedMultiplicity("enumerate_branches supports multiplicity two, got " +
                                      std::to_string(pairs.size()));
    if (pairs.size() != 2)
        throw DomainError("enumerate_branches needs exactly two simultaneous pairs");

    std::vector<PhaseState> out;
    const std::vector<std::vector<Pair>> orders = {{pairs[0], pairs[1]},
                                                   {pairs[1], pairs[0]}};
    for (const auto& order : orders) {
        PhaseState s = detail::apply_ordering(at_contact, order, p).first;
        bool dup = false;
        for (const PhaseState& seen : out)
            if ((seen.vel - s.vel).lpNorm<Eigen::Infinity>() <= 1e-12) dup = true;
        if (!dup) out.push_back(std::move(s));
    }
    return out;
}

// --- trajectory event-log format -------------------------------------------
//
// One line per event:  k t i j a_1..a_nu n_1..n_nu grazing_margin E I_norm
// All reals carry 17 significant digits, so export -> import round-trips the
// records exactly.

struct EventRecord {
    std::size_t k = 0;
    double time = 0.0;
    int i = 0, j = 0;
    std::vector<int> lattice;
    std::vector<double> normal;
    double grazing_margin = 0.0;
    double energy = 0.0;
    double momentum_norm = 0.0;

    friend bool operator==(const EventRecord& x, const EventRecord& y) {
        return x.k == y.k && x.time == y.time && x.i == y.i && x.j == y.j &&
               x.lattice == y.lattice && x.normal == y.normal &&
               x.grazing_margin == y.grazing_margin && x.energy == y.energy &&
               x.momentum_norm == y.momentum_norm;
    }
};

inline std::vector<EventRecord> event_records(const Trajectory& traj,
                                              const SystemParams& p) {
    std::vector<EventRecord> out;
    out.reserve(traj.events.size());
    for (std::size_t k = 0; k < traj.events.size(); ++k) {
        const CollisionEvent& ev = traj.events[k];
        EventRecord r;
        r.k = k + 1;
        r.time = ev.time;
        r.i = ev.pair.a;
        r.j = ev.pair.b;
        r.lattice.assign(ev.lattice.data(), ev.lattice.data() + ev.lattice.size());
        r.normal.assign(ev.normal.data(), ev.normal.data() + ev.normal.size());
        r.grazing_margin = ev.grazing_margin;
        Vec momentum = Vec::Zero(p.dim);
        for (int i = 1; i <= p.n_balls; ++i)
            momentum += p.masses[i - 1] * ball(ev.v_post, i, p.dim);
        r.energy = 0.5 * mass_inner(ev.v_post, ev.v_post, p.masses);
        r.momentum_norm = momentum.norm();
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_events(std::ostream& out, const std::vector<EventRecord>& recs,
                         int nu) {
    out << "# trajectory events; columns: k t i j a_1..a_" << nu << " n_1..n_" << nu
        << " grazing_margin E I_norm\n";
    out << "# units: lengths and times in box units with unit total kinetic "
           "energy scale (E = 1/2); a integer lattice counts; n dimensionless "
           "unit normal\n";
    out << "# nu " << nu << "\n";
    for (const EventRecord& r : recs) {
        out << r.k << " " << full_digits(r.time) << " " << r.i << " " << r.j;
        for (int c : r.lattice) out << " " << c;
        for (double x : r.normal) out << " " << full_digits(x);
        out << " " << full_digits(r.grazing_margin) << " " << full_digits(r.energy)
            << " " << full_digits(r.momentum_norm) << "\n";
    }
}

inline std::vector<EventRecord> read_events(std::istream& in) {
    std::vector<EventRecord> out;
    std::string line;
    int nu = -1;
    while (std::getline(in, line)) {
        if (line.rfind("# nu ", 0) == 0) {
            nu = static_cast<int>(parse_int(split_ws(line.substr(5)).at(0)));
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        if (nu <= 0) throw IoError("trajectory file lacks the '# nu' header line");
        const auto tok = split_ws(line);
        const std::size_t want = 4 + 2 * static_cast<std::size_t>(nu) + 3;
        if (tok.size() != want)
            throw IoError("trajectory line has " + std::to_string(tok.size()) +
                          " fields, expected " + std::to_string(want));
        EventRecord r;
        std::size_t c = 0;
        r.k = static_cast<std::size_t>(parse_int(tok[c++]));
        r.time = parse_double(tok[c++]);
        r.i = static_cast<int>(parse_int(tok[c++]));
        r.j = static_cast<int>(parse_int(tok[c++]));
        for (int d = 0; d < nu; ++d)
            r.lattice.push_back(static_cast<int>(parse_int(tok[c++])));
        for (int d = 0; d < nu; ++d) r.normal.push_back(parse_double(tok[c++]));
        r.grazing_margin = parse_double(tok[c++]);
        r.energy = parse_double(tok[c++]);
        r.momentum_norm = parse_double(tok[c++]);
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_trajectory_file(const std::string& path, const Trajectory& traj,
                                  const SystemParams& p) {
    std::ostringstream ss;
    write_events(ss, event_records(traj, p), p.dim);
    atomic_write(path, ss.str());
}

// --- phase-state file format ------------------------------------------------

inline void write_state(std::ostream& out, const PhaseState& s, const SystemParams& p) {
    out << "# phase state\n";
    out << "n_balls " << p.n_balls << "\n";
    out << "dim " << p.dim << "\n";
    out << "time " << full_digits(s.time) << "\n";
    out << "pos";
    for (Eigen::Index c = 0; c < s.pos.size(); ++c) out << " " << full_digits(s.pos[c]);
    out << "\nvel";
    for (Eigen::Index c = 0; c < s.vel.size(); ++c) out << " " << full_digits(s.vel[c]);
    out << "\n";
}

inline PhaseState read_state(std::istream& in, const SystemParams& p) {
    PhaseState s;
    s.pos = Vec::Zero(p.dim * p.n_balls);
    s.vel = Vec::Zero(p.dim * p.n_balls);
    bool have_pos = false, have_vel = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "n_balls") {
            if (parse_int(tok.at(1)) != p.n_balls)
                throw IoError("state file n_balls does not match params");
        } else if (tok[0] == "dim") {
            if (parse_int(tok.at(1)) != p.dim)
                throw IoError("state file dim does not match params");
        } else if (tok[0] == "time") {
            s.time = parse_double(tok.at(1));
        } else if (tok[0] == "pos" || tok[0] == "vel") {
            Vec& target = tok[0] == "pos" ? s.pos : s.vel;
            if (tok.size() != static_cast<std::size_t>(target.size()) + 1)
                throw IoError("state file " + tok[0] + " needs " +
                              std::to_string(target.size()) + " components");
            for (Eigen::Index c = 0; c < target.size(); ++c)
                target[c] = parse_double(tok[c + 1]);
            (tok[0] == "pos" ? have_pos : have_vel) = true;
        } else {
            throw IoError("unknown key in state file: '" + tok[0] + "'");
        }
    }
    if (!have_pos || !have_vel) throw IoError("state file lacks pos or vel");
    return s;
}

inline void write_state_file(const std::string& path, const PhaseState& s,
                             const SystemParams& p) {
    std::ostringstream ss;
    write_state(ss, s, p);
    atomic_write(path, ss.str());
}

inline PhaseState read_state_file(const std::string& path, const SystemParams& p) {
    std::istringstream in(read_file(path));
    return read_state(in, p);
}

inline std::vector<EventRecord> read_trajectory_file(const std::string& path) {
    std::istringstream in(read_file(path));
    return read_events(in);
}

} // namespace hardball

#endif
