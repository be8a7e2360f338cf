#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "hardball/tangent.hpp"
#include "test_helpers.hpp"

using namespace hardball;

namespace {

// moderate density: FD probes must stay inside the linear regime
SystemParams moderate2() { return make_params(2, 3, 0.45, 1.9, {1.0, 2.0}); }
SystemParams moderate3() { return make_params(3, 3, 0.45, 2.0, {1.0, 2.0, 3.0}); }

double rel_op_norm_err(const Mat& a, const Mat& b) {
    return (a - b).operatorNorm() / b.operatorNorm();
}

// midpoint of the free-flight interval after the last counted event
double safe_window(const Trajectory& traj, std::size_t n_events) {
    const double t_last = traj.events[n_events - 1].time;
    const double t_next = n_events < traj.events.size()
                              ? traj.events[n_events].time
                              : traj.final_state.time;
    return 0.5 * (t_last + t_next) - traj.initial.time;
}

} // namespace

TEST_CASE("tangent_step_free basics") {
    TangentVector t{Vec::Zero(6), Vec::Zero(6)};
    t.dq << 1, 2, 3, 4, 5, 6;

    // dv = 0: dq unchanged
    const TangentVector a = tangent_step_free(t, 2.5);
    REQUIRE((a.dq - t.dq).norm() == 0.0);

    // dq = 0, dv = w: dq = tau * w
    TangentVector u{Vec::Zero(6), Vec::Ones(6)};
    const TangentVector b = tangent_step_free(u, 2.0);
    REQUIRE((b.dq - 2.0 * Vec::Ones(6)).norm() == 0.0);
    REQUIRE((b.dv - u.dv).norm() == 0.0);

    // composition equals a single step
    const TangentVector c1 = tangent_step_free(tangent_step_free(u, 0.7), 1.3);
    const TangentVector c2 = tangent_step_free(u, 2.0);
    REQUIRE((c1.dq - c2.dq).norm() < 1e-15);
}

TEST_CASE("tangent collision step maps the flow direction") {
    const SystemParams p = moderate3();
    const Trajectory traj = hardball_test::clean_segment(p, 11, 4);
    // flow direction (v, 0) maps to (v_post, 0) through each event
    TangentVector t{traj.events[0].v_pre, Vec::Zero(p.dim * p.n_balls)};
    for (const auto& ev : traj.events) {
        t = tangent_step_collision(t, ev, p);
        REQUIRE((t.dq - ev.v_post).norm() < 1e-10);
        REQUIRE(t.dv.norm() < 1e-10);
        // prepare for the next event: free flight keeps dq = v
    }
}

TEST_CASE("tangent collision step keeps neutral vectors velocity-flat") {
    const SystemParams p = moderate2();
    const Trajectory traj = hardball_test::clean_segment(p, 13, 4);
    const NeutralResult r = neutral_space(traj, p);
    REQUIRE(r.dimension == 1);

    // a neutral translation never changes velocities to first order: the
    // tangent image of (W, 0) keeps dv = 0 across the whole segment
    TangentVector t{r.basis[0], Vec::Zero(p.dim * p.n_balls)};
    for (const auto& ev : traj.events) {
        t = tangent_step_collision(t, ev, p);
        REQUIRE(t.dv.norm() < 1e-9);
    }
}

TEST_CASE("grazing events reject the tangent step") {
    const SystemParams p = moderate2();
    const Trajectory traj = hardball_test::clean_segment(p, 17, 1);
    CollisionEvent ev = traj.events[0];
    // synthetic: relative velocity orthogonal to the normal
    const Vec n = ev.normal;
    Vec vpre = ev.v_pre;
    const Vec rel = ball(vpre, ev.pair.a, p.dim) - ball(vpre, ev.pair.b, p.dim);
    ball(vpre, ev.pair.a, p.dim) -= 0.5 * rel.dot(n) * n;
    ball(vpre, ev.pair.b, p.dim) += 0.5 * rel.dot(n) * n;
    ev.v_pre = vpre;
    TangentVector t{Vec::Ones(6), Vec::Zero(6)};
    REQUIRE_THROWS_AS(tangent_step_collision(t, ev, p), GrazingEvent);
}

TEST_CASE("flow_jacobian_fd: free flight has the shear form") {
    const SystemParams p = make_params(2, 3, 0.5, 10.0, {2.0, 2.0});
    PhaseState s0;
    s0.pos = Vec::Zero(6);
    ball(s0.pos, 1, 3) << 1.0, 5.0, 5.0;
    ball(s0.pos, 2, 3) << 4.0, 5.0, 5.0;
    s0.vel = Vec::Zero(6);
    ball(s0.vel, 1, 3) << 0.5, 0.0, 0.0;
    ball(s0.vel, 2, 3) << -0.5, 0.0, 0.0;

    const double T = 1.0; // before the first collision
    const Mat J = flow_jacobian_fd(s0, T, 1e-6, p);
    Mat expect = Mat::Identity(12, 12);
    for (int c = 0; c < 6; ++c) expect(c, 6 + c) = T;
    REQUIRE((J - expect).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("composed tangent map matches the FD Jacobian across collisions") {
    for (const SystemParams& p : {moderate2(), moderate3()}) {
        for (std::uint64_t seed : {21, 22, 23}) {
            const Trajectory traj = hardball_test::clean_segment(p, seed, 4, 5e-2);
            const double T = safe_window(traj, 3);
            const Mat fd = flow_jacobian_fd(traj.initial, T, 1e-6, p);
            const Mat an = tangent_map_matrix(traj, T, p);
            REQUIRE(rel_op_norm_err(an, fd) <= 1e-4);
            // volume preservation of the event map
            REQUIRE(std::abs(std::abs(fd.determinant()) - 1.0) <= 1e-3);
        }
    }
}

TEST_CASE("FD Jacobian satisfies the chain rule") {
    const SystemParams p = moderate2();
    const Trajectory traj = hardball_test::clean_segment(p, 29, 4, 5e-2);
    const double t1 = safe_window(traj, 1);
    const double t2 = safe_window(traj, 3);

    const Mat j02 = flow_jacobian_fd(traj.initial, t2, 1e-6, p);
    const Mat j01 = flow_jacobian_fd(traj.initial, t1, 1e-6, p);
    // restart state at t1 (between collisions)
    SimulateOptions opt;
    opt.max_time = traj.initial.time + t1;
    const PhaseState mid = simulate(traj.initial, opt, p).final_state;
    const Mat j12 = flow_jacobian_fd(mid, t2 - t1, 1e-6, p);
    REQUIRE(rel_op_norm_err(j12 * j01, j02) <= 1e-3);
}

TEST_CASE("flow_jacobian_fd raises TopologyChange near a sequence boundary") {
    const SystemParams p = moderate2();
    const Trajectory traj = hardball_test::clean_segment(p, 31, 2);
    // window ending essentially at a collision: +-eps runs disagree
    const double T = traj.events[1].time - traj.initial.time;
    REQUIRE_THROWS_AS(flow_jacobian_fd(traj.initial, T, 1e-6, p), TopologyChange);
}

TEST_CASE("symplectic form: antisymmetry and free-flight invariance") {
    Rng rng(37);
    const std::vector<double> masses{1.0, 2.0};
    TangentVector u{Vec(6), Vec(6)}, w{Vec(6), Vec(6)};
    for (int c = 0; c < 6; ++c) {
        u.dq[c] = rng.normal();
        u.dv[c] = rng.normal();
        w.dq[c] = rng.normal();
        w.dv[c] = rng.normal();
    }
    REQUIRE(symplectic_defect(u, u, masses) == 0.0);
    REQUIRE(symplectic_defect(u, w, masses) ==
            Catch::Approx(-symplectic_defect(w, u, masses)));

    const double before = symplectic_defect(u, w, masses);
    const double after = symplectic_defect(tangent_step_free(u, 1.7),
                                           tangent_step_free(w, 1.7), masses);
    REQUIRE(after == Catch::Approx(before).margin(1e-14));
}

TEST_CASE("symplectic form is preserved through collisions") {
    const SystemParams p = moderate3();
    const Trajectory traj = hardball_test::clean_segment(p, 41, 1000, 1e-6);
    Rng rng(43);
    TangentVector u{Vec(9), Vec(9)}, w{Vec(9), Vec(9)};
    for (int c = 0; c < 9; ++c) {
        u.dq[c] = rng.normal();
        u.dv[c] = rng.normal();
        w.dq[c] = rng.normal();
        w.dv[c] = rng.normal();
    }
    // normalize so the form stays O(1) while the vectors grow
    double t_now = traj.initial.time;
    double worst_step = 0.0;
    const double omega0 = symplectic_defect(u, w, p.masses);
    double omega_prev = omega0;
    for (const auto& ev : traj.events) {
        const double tau = ev.time - t_now;
        u = tangent_step_free(u, tau);
        w = tangent_step_free(w, tau);
        u = tangent_step_collision(u, ev, p);
        w = tangent_step_collision(w, ev, p);
        t_now = ev.time;
        // renormalize both vectors by a common factor to avoid overflow;
        // omega scales by the square of the factor
        const double scale = std::max(u.dq.lpNorm<Eigen::Infinity>(),
                                      u.dv.lpNorm<Eigen::Infinity>());
        if (scale > 1e3) {
            u.dq /= scale;
            u.dv /= scale;
            w.dq /= scale;
            w.dv /= scale;
            omega_prev /= scale * scale;
        }
        const double omega = symplectic_defect(u, w, p.masses);
        worst_step = std::max(worst_step, std::abs(omega - omega_prev));
        omega_prev = omega;
    }
    REQUIRE(worst_step <= 1e-8);
}

TEST_CASE("lyapunov spectrum: pairing, zero modes, positive top exponent") {
    const SystemParams p = make_params(2, 3, 0.5, 5.0, {1.0, 1.0});
    Rng rng(47);
    const PhaseState s0 = sample_phase_point(p, rng);
    const LyapunovSpectrum spec = lyapunov_spectrum(s0, 3000, 1, p, 12345);

    // 2*nu*N - nu - 1 = 8 exponents for N=2, nu=3
    REQUIRE(spec.exponents.size() == 8);
    REQUIRE(spec.zero_modes_expected == 4);

    // top exponent positive with the CI excluding zero
    const auto& top = spec.exponents.front();
    REQUIRE(top.value > 0.0);
    REQUIRE(top.value - 2.0 * top.stderr_ > 0.0);

    // symplectic pairing: lambda_k + lambda_{2m+1-k} = 0 within 2 se
    const std::size_t m = spec.exponents.size();
    for (std::size_t k = 0; k < m / 2; ++k) {
        const auto& a = spec.exponents[k];
        const auto& b = spec.exponents[m - 1 - k];
        const double se = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
        REQUIRE(std::abs(a.value + b.value) <= 2.0 * se + 1e-9);
    }

    // the nu + 1 middle exponents are the near-zero modes
    std::vector<double> sorted_abs;
    for (const auto& e : spec.exponents) sorted_abs.push_back(std::abs(e.value));
    std::sort(sorted_abs.begin(), sorted_abs.end());
    for (int k = 0; k < 4; ++k) REQUIRE(sorted_abs[k] < 0.05 * sorted_abs.back());

    std::ostringstream out;
    write_spectrum(out, spec, p, 47);
    REQUIRE(out.str().find("zero_modes_expected 4") != std::string::npos);
}
