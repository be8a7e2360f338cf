#ifndef HARDBALL_PROBE_HPP
#define HARDBALL_PROBE_HPP

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hardball/neutral.hpp"
#include "hardball/rng.hpp"
#include "hardball/tangent.hpp"

namespace hardball {

// --- sampling ---------------------------------------------------------------

struct ParameterRanges {
    double mass_min = 1.0, mass_max = 1.0;
    double box_min = 1.0, box_max = 1.0;
};

/// Masses i.i.d. uniform in [mass_min, mass_max], box uniform in
/// [box_min, box_max]; deterministic under the rng stream.
inline SystemParams sample_parameters(Rng& rng, const ParameterRanges& ranges,
                                      const SystemParams& tmpl) {
    if (ranges.mass_min <= 0.0 || ranges.mass_max < ranges.mass_min)
        throw DomainError("mass range must be positive and ordered");
    if (ranges.box_min <= 4.0 * tmpl.radius || ranges.box_max < ranges.box_min)
        throw DomainError("box range must be ordered and above the 4r room guard");
    SystemParams p = tmpl;
    for (int i = 0; i < p.n_balls; ++i)
        p.masses[i] = ranges.mass_min == ranges.mass_max
                          ? ranges.mass_min
                          : rng.uniform(ranges.mass_min, ranges.mass_max);
    p.box = ranges.box_min == ranges.box_max
                ? ranges.box_min
                : rng.uniform(ranges.box_min, ranges.box_max);
    p.validate();
    return p;
}

/// Liouville-uniform phase point: positions rejection-sampled uniformly among
/// admissible configurations, velocities uniform on the reduced energy sphere
/// (mass-metric Gaussian, projected to Z, normalized).
inline PhaseState sample_phase_point(const SystemParams& p, Rng& rng,
                                     std::size_t max_rejections = 100000) {
    const int nu = p.dim;
    PhaseState s;
    s.time = 0.0;
    s.pos = Vec::Zero(nu * p.n_balls);
    s.vel = Vec::Zero(nu * p.n_balls);

    std::size_t attempts = 0;
    while (true) {
        if (++attempts > max_rejections) {
            const double ball_volume_scale =
                p.n_balls * std::pow(2.0 * p.radius / p.box, nu);
            throw RejectionOverflow(
                "no admissible configuration after " + std::to_string(max_rejections) +
                " rejections (packing indicator " + full_digits(ball_volume_scale) + ")");
        }
        for (Eigen::Index c = 0; c < s.pos.size(); ++c)
            s.pos[c] = rng.uniform(0.0, p.box);
        if (check_admissible(s, p)) break;
    }

    for (int i = 1; i <= p.n_balls; ++i) {
        const double scale = 1.0 / std::sqrt(p.masses[i - 1]);
        for (int c = 0; c < nu; ++c) ball(s.vel, i, nu)[c] = scale * rng.normal();
    }
    s.vel = normalize_energy(project_to_Z(s.vel, p.masses), p.masses);
    return s;
}

/// A tangential-reflection phase point: one pair exactly at contact with zero
/// normal relative velocity, the remaining data Liouville-random. For a
/// grazing reflection incoming and outgoing velocities coincide, so the state
/// is already in the outgoing convention.
inline PhaseState sample_tangential_point(const SystemParams& p, Rng& rng,
                                          std::size_t max_rejections = 100000) {
    const int nu = p.dim;
    const int i = 1 + static_cast<int>(rng.below(p.n_balls));
    int j = 1 + static_cast<int>(rng.below(p.n_balls - 1));
    if (j >= i) ++j;
    const Pair pr(i, j);

    PhaseState s;
    s.time = 0.0;
    s.pos = Vec::Zero(nu * p.n_balls);
    s.vel = Vec::Zero(nu * p.n_balls);

    std::size_t attempts = 0;
    while (true) {
        if (++attempts > max_rejections)
            throw RejectionOverflow("no admissible tangential configuration after " +
                                    std::to_string(max_rejections) + " rejections");
        // contact pair: random placement and random contact direction
        Vec n(nu);
        for (int c = 0; c < nu; ++c) n[c] = rng.normal();
        n /= n.norm();
        for (int c = 0; c < nu; ++c) ball(s.pos, pr.a, nu)[c] = rng.uniform(0.0, p.box);
        ball(s.pos, pr.b, nu) = ball(s.pos, pr.a, nu) - 2.0 * p.radius * n;
        for (int k = 1; k <= p.n_balls; ++k) {
            if (k == pr.a || k == pr.b) continue;
            for (int c = 0; c < nu; ++c) ball(s.pos, k, nu)[c] = rng.uniform(0.0, p.box);
        }
        s.pos = torus_wrap(s.pos, p.box);
        if (!check_admissible(s, p)) continue;

        for (int k = 1; k <= p.n_balls; ++k) {
            const double scale = 1.0 / std::sqrt(p.masses[k - 1]);
            for (int c = 0; c < nu; ++c) ball(s.vel, k, nu)[c] = scale * rng.normal();
        }
        s.vel = project_to_Z(s.vel, p.masses);

        // kill the normal relative velocity with a base-space correction, so
        // momentum stays zero and the contact becomes exactly grazing
        const Vec d = torus_reduce(ball(s.pos, pr.a, nu) - ball(s.pos, pr.b, nu), p.box);
        const Vec nc = d / d.norm();
        const double mi = p.masses[pr.a - 1], mj = p.masses[pr.b - 1];
        const double rel = (ball(s.vel, pr.a, nu) - ball(s.vel, pr.b, nu)).dot(nc);
        const double lambda = rel / (mi + mj);
        ball(s.vel, pr.a, nu) -= lambda * mj * nc;
        ball(s.vel, pr.b, nu) += lambda * mi * nc;
        try {
            s.vel = normalize_energy(s.vel, p.masses);
        } catch (const ZeroVelocity&) {
            continue;
        }
        return s;
    }
}

// --- exact binomial confidence interval --------------------------------------

/// Clopper-Pearson interval at the given confidence level, computed by
/// bisection on the exact binomial tail.
struct BinomialCI {
    double lower = 0.0;
    double upper = 1.0;
};

namespace detail {

inline double binomial_tail_ge(int k, int n, double prob) {
    // P(X >= k) for X ~ Bin(n, prob); log-space summation
    if (k <= 0) return 1.0;
    if (prob <= 0.0) return 0.0;
    if (prob >= 1.0) return 1.0;
    double sum = 0.0;
    for (int j = k; j <= n; ++j) {
        const double lg = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                          std::lgamma(n - j + 1.0) + j * std::log(prob) +
                          (n - j) * std::log1p(-prob);
        sum += std::exp(lg);
    }
    return std::min(sum, 1.0);
}

} // namespace detail

inline BinomialCI clopper_pearson(int successes, int trials, double confidence = 0.95) {
    if (trials <= 0 || successes < 0 || successes > trials)
        throw DomainError("clopper_pearson: bad counts");
    const double alpha = 1.0 - confidence;
    BinomialCI ci;
    auto bisect = [&](auto f) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (f(mid)) lo = mid;
            else hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    if (successes == 0) {
        ci.lower = 0.0;
    } else {
        ci.lower = bisect([&](double prob) {
            return detail::binomial_tail_ge(successes, trials, prob) < alpha / 2.0;
        });
    }
    if (successes == trials) {
        ci.upper = 1.0;
    } else {
        ci.upper = bisect([&](double prob) {
            return 1.0 - detail::binomial_tail_ge(successes + 1, trials, prob) >=
                   alpha / 2.0;
        });
    }
    return ci;
}

// --- surveys ------------------------------------------------------------------

struct SurveyConfig {
    SystemParams params_template;     ///< N, nu, r, tolerances
    ParameterRanges ranges;           ///< masses and box; collapse for fixed values
    std::size_t n_samples = 100;
    std::uint64_t master_seed = 1;
    int richness_target = 0;          ///< 0 = ceil(C(N))
    std::size_t event_cap = 10000;    ///< segment extension cap
    std::size_t n_threads = 1;
    std::string mode = "sufficiency"; ///< or "ansatz"
};

struct SampleRecord {
    int id = 0;
    std::uint64_t seed = 0;
    std::vector<double> masses;
    double box = 0.0;
    std::size_t n_events = 0;
    int richness = 0;
    bool witness_found = false;
    std::string singular = "none"; ///< none | tangential | double
    int neutral_dim = -1;          ///< -1 = not computed
    bool sufficient = false;
    /// sufficient | counterexample | indeterminate | not_rich | singular | error:<kind>
    std::string classification = "error:unset";
    double lambda_max = std::numeric_limits<double>::quiet_NaN();
    double min_gap = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> singular_values; ///< full spectrum kept for audit
    double second_smallest_sv = std::numeric_limits<double>::quiet_NaN();
};

struct SurveyReport {
    SurveyConfig config;
    std::vector<SampleRecord> samples;

    std::size_t count(const std::string& cls) const {
        std::size_t c = 0;
        for (const auto& s : samples)
            if (s.classification == cls) ++c;
        return c;
    }
    /// Rich, nonsingular samples: the denominator of the sufficiency rate.
    std::size_t eligible() const {
        std::size_t c = 0;
        for (const auto& s : samples)
            if (s.classification == "sufficient" ||
                s.classification == "counterexample" ||
                s.classification == "indeterminate")
                ++c;
        return c;
    }
};

namespace detail {

/// Crude top-exponent estimate over the sample's own segment: one tangent
/// vector, renormalized every event. Survey bookkeeping only.
inline double lambda_max_estimate(const Trajectory& traj, const SystemParams& p,
                                  std::uint64_t seed) {
    if (traj.events.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    Rng rng(seed);
    const Eigen::Index half = static_cast<Eigen::Index>(p.dim) * p.n_balls;
    TangentVector t{Vec(half), Vec(half)};
    for (Eigen::Index c = 0; c < half; ++c) {
        t.dq[c] = rng.normal();
        t.dv[c] = rng.normal();
    }
    double norm = std::sqrt(tangent_inner(t, t, p.masses));
    t.dq /= norm;
    t.dv /= norm;
    double log_sum = 0.0;
    double t_now = traj.initial.time;
    for (const CollisionEvent& ev : traj.events) {
        t = tangent_step_free(t, ev.time - t_now);
        t = tangent_step_collision(t, ev, p);
        t_now = ev.time;
        norm = std::sqrt(tangent_inner(t, t, p.masses));
        log_sum += std::log(norm);
        t.dq /= norm;
        t.dv /= norm;
    }
    const double span = t_now - traj.initial.time;
    return span > 0.0 ? log_sum / span : std::numeric_limits<double>::quiet_NaN();
}

/// Simulate until the greedy richness reaches `target` or the event cap.
/// Returns the trajectory truncated at the event that completed the target
/// block (the segment the sufficiency test runs on).
inline Trajectory simulate_until_rich(const PhaseState& s0, int target,
                                      std::size_t event_cap, const SystemParams& p,
                                      int& out_richness) {
    SimulateOptions opt;
    opt.max_events = event_cap;
    Trajectory traj = simulate(s0, opt, p);

    RichnessAccumulator acc(p.n_balls);
    std::size_t cut = traj.events.size();
    for (std::size_t k = 0; k < traj.events.size(); ++k) {
        acc.add(traj.events[k].pair);
        if (acc.blocks() >= target) {
            cut = k + 1;
            break;
        }
    }
    out_richness = acc.blocks();
    if (cut < traj.events.size()) {
        traj.events.resize(cut);
        traj.sequence.labels.resize(cut);
        std::vector<SingularFlag> flags;
        for (const auto& f : traj.singular_flags)
            if (f.event_index <= cut) flags.push_back(f);
        traj.singular_flags = flags;
        traj.pending_pairs.clear();
        // final_state is not used by the analysis below; leave as simulated
    }
    return traj;
}

inline void run_parallel(std::size_t n, std::size_t n_threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

} // namespace detail

/// One survey sample: draw parameters and a start state, extend the segment
/// until the richness target, then run the sufficiency test. Non-sufficient
/// verdicts whose rank decision is within 10x of rank_tol are classified
/// indeterminate rather than counterexample: near-threshold numerics are not
/// evidence.
inline SampleRecord survey_sample(const SurveyConfig& cfg, int id) {
    SampleRecord rec;
    rec.id = id;
    rec.seed = Rng::derive_seed(cfg.master_seed, static_cast<std::uint64_t>(id));
    Rng rng(rec.seed);

    SystemParams p = cfg.params_template;
    try {
        p = sample_parameters(rng, cfg.ranges, cfg.params_template);
        rec.masses = p.masses;
        rec.box = p.box;

        const PhaseState s0 = cfg.mode == "ansatz" ? sample_tangential_point(p, rng)
                                                   : sample_phase_point(p, rng);
        const int target =
            cfg.richness_target > 0 ? cfg.richness_target : richness_target(p.n_balls);

        int rich = 0;
        Trajectory traj =
            detail::simulate_until_rich(s0, target, cfg.event_cap, p, rich);
        rec.n_events = traj.events.size();
        rec.richness = rich;
        rec.min_gap = traj.min_gap;
        rec.witness_found = find_witness(traj.sequence).has_value();
        try {
            rec.lambda_max = detail::lambda_max_estimate(traj, p, rec.seed ^ 0xabcdefULL);
        } catch (const GrazingEvent&) {
            // tangential event inside the segment: leave the estimate as NaN
        }

        if (!traj.nonsingular()) {
            rec.singular = traj.has_flag(SingularKind::double_collision)
                               ? "double"
                               : "tangential";
            rec.classification = "singular";
            return rec;
        }
        if (rich < target) {
            rec.classification = "not_rich";
            return rec;
        }

        const SufficiencyResult suff = is_sufficient(traj, p);
        rec.neutral_dim = suff.neutral.dimension;
        rec.sufficient = suff.sufficient;
        rec.singular_values = suff.neutral.singular_values;
        if (suff.neutral.singular_values.size() >= 2) {
            // second-smallest singular value: the margin of the rank decision
            rec.second_smallest_sv =
                suff.neutral.singular_values[suff.neutral.singular_values.size() - 2];
        }
        if (suff.sufficient) {
            rec.classification = "sufficient";
        } else {
            const double smax = suff.neutral.singular_values.empty()
                                    ? 1.0
                                    : suff.neutral.singular_values.front();
            // the smallest singular value kept above threshold decides rank
            double margin = std::numeric_limits<double>::infinity();
            for (double sv : suff.neutral.singular_values)
                if (sv > p.rank_tol * smax) margin = std::min(margin, sv / smax);
            rec.classification =
                margin < 10.0 * p.rank_tol ? "indeterminate" : "counterexample";
        }
    } catch (const Error& err) {
        rec.classification = std::string("error:") + err.what();
    }
    return rec;
}

/// Run a survey. Samples are independent work items; per-sample seeds derive
/// from (master_seed, id), so the thread count never changes the report.
inline SurveyReport run_survey(const SurveyConfig& cfg) {
    SurveyReport report;
    report.config = cfg;
    report.samples.resize(cfg.n_samples);
    detail::run_parallel(cfg.n_samples, cfg.n_threads, [&](std::size_t i) {
        report.samples[i] = survey_sample(cfg, static_cast<int>(i));
    });
    return report;
}

inline SurveyReport sufficiency_survey(SurveyConfig cfg) {
    cfg.mode = "sufficiency";
    return run_survey(cfg);
}

inline SurveyReport ansatz_probe(SurveyConfig cfg) {
    cfg.mode = "ansatz";
    return run_survey(cfg);
}

// --- inter-collision gap statistics ------------------------------------------

struct GapStatistics {
    double min_gap = std::numeric_limits<double>::infinity();
    std::vector<double> bin_edges;   ///< n_bins + 1 edges, linear over [0, max]
    std::vector<std::size_t> counts; ///< n_bins
    bool accumulation_suspected = false;
};

inline GapStatistics min_gap_statistics(const Trajectory& traj, double floor = 0.0,
                                        std::size_t n_bins = 20) {
    GapStatistics g;
    std::vector<double> gaps;
    for (std::size_t k = 1; k < traj.events.size(); ++k)
        gaps.push_back(traj.events[k].time - traj.events[k - 1].time);
    if (gaps.empty()) return g;
    double max_gap = 0.0;
    for (double x : gaps) {
        g.min_gap = std::min(g.min_gap, x);
        max_gap = std::max(max_gap, x);
    }
    g.accumulation_suspected = floor > 0.0 && g.min_gap < floor;
    g.bin_edges.resize(n_bins + 1);
    g.counts.assign(n_bins, 0);
    for (std::size_t b = 0; b <= n_bins; ++b)
        g.bin_edges[b] = max_gap * static_cast<double>(b) / n_bins;
    for (double x : gaps) {
        std::size_t b = max_gap > 0.0
                            ? static_cast<std::size_t>(x / max_gap * n_bins)
                            : 0;
        if (b >= n_bins) b = n_bins - 1;
        ++g.counts[b];
    }
    return g;
}

// --- report files --------------------------------------------------------------

inline std::string survey_csv(const SurveyReport& report) {
    const int N = report.config.params_template.n_balls;
    std::ostringstream out;
    out << "sample_id,seed";
    for (int i = 1; i <= N; ++i) out << ",mass_" << i;
    out << ",box,n_events,richness,witness_found,singular,neutral_dim,sufficient,"
           "classification,lambda_max,min_gap,second_smallest_sv\n";
    for (const SampleRecord& s : report.samples) {
        out << s.id << "," << s.seed;
        for (int i = 0; i < N; ++i)
            out << ","
                << (i < static_cast<int>(s.masses.size()) ? full_digits(s.masses[i])
                                                          : "nan");
        out << "," << full_digits(s.box) << "," << s.n_events << "," << s.richness
            << "," << (s.witness_found ? 1 : 0) << "," << s.singular << ","
            << s.neutral_dim << "," << (s.sufficient ? 1 : 0) << ",";
        // classifications may embed error text; keep the cell csv-safe
        std::string cls = s.classification;
        for (char& c : cls)
            if (c == ',' || c == '\n') c = ';';
        out << cls << "," << full_digits(s.lambda_max) << "," << full_digits(s.min_gap)
            << "," << full_digits(s.second_smallest_sv) << "\n";
    }
    return out.str();
}

inline std::string survey_summary(const SurveyReport& report) {
    std::ostringstream out;
    const auto& cfg = report.config;
    out << "# survey summary (" << cfg.mode << " mode)\n";
    out << "# NOTE: sampling probes typicality only; measure-zero exceptional\n";
    out << "# parameter sets are invisible to it, and near-threshold rank\n";
    out << "# decisions are reported as indeterminate, not as counterexamples.\n";
    out << "n_samples " << cfg.n_samples << "\n";
    out << "master_seed " << cfg.master_seed << "\n";
    out << "richness_target "
        << (cfg.richness_target > 0 ? cfg.richness_target
                                    : richness_target(cfg.params_template.n_balls))
        << "\n";
    out << "event_cap " << cfg.event_cap << "\n";

    const std::size_t n_suff = report.count("sufficient");
    const std::size_t n_counter = report.count("counterexample");
    const std::size_t n_indet = report.count("indeterminate");
    const std::size_t n_not_rich = report.count("not_rich");
    const std::size_t n_singular = report.count("singular");
    std::size_t n_error = 0;
    for (const auto& s : report.samples)
        if (s.classification.rfind("error:", 0) == 0) ++n_error;

    out << "sufficient " << n_suff << "\n";
    out << "counterexample " << n_counter << "\n";
    out << "indeterminate " << n_indet << "\n";
    out << "not_rich " << n_not_rich << "\n";
    out << "singular " << n_singular << "\n";
    out << "errors " << n_error << "\n";

    const std::size_t eligible = report.eligible();
    out << "eligible " << eligible << "\n";
    if (eligible > 0) {
        const double rate = static_cast<double>(n_suff) / eligible;
        const BinomialCI ci =
            clopper_pearson(static_cast<int>(n_suff), static_cast<int>(eligible));
        out << "sufficiency_rate " << full_digits(rate) << "\n";
        out << "sufficiency_rate_ci95 " << full_digits(ci.lower) << " "
            << full_digits(ci.upper) << "\n";
    }

    bool any_audit = false;
    for (const SampleRecord& s : report.samples) {
        if (s.classification != "counterexample" && s.classification != "indeterminate")
            continue;
        if (!any_audit) {
            out << "# failure audit: sample_id classification second_smallest_sv "
                   "spectrum...\n";
            any_audit = true;
        }
        out << "audit " << s.id << " " << s.classification << " "
            << full_digits(s.second_smallest_sv);
        for (double sv : s.singular_values) out << " " << full_digits(sv);
        out << "\n";
    }
    return out.str();
}

/// CSV table and summary block, both written atomically.
inline void write_survey_report(const SurveyReport& report, const std::string& csv_path,
                                const std::string& summary_path) {
    atomic_write(csv_path, survey_csv(report));
    atomic_write(summary_path, survey_summary(report));
}

} // namespace hardball

#endif
