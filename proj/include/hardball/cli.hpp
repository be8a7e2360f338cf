#ifndef HARDBALL_CLI_HPP
#define HARDBALL_CLI_HPP

#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hardball/probe.hpp"

namespace hardball {

/// Everything a run needs: the system parameters, an initial-condition mode
/// (seed or explicit state file), the stop condition, output paths, and the
/// subcommand-specific knobs. Lives in a documented key-value text format;
/// command-line flags override file values.
struct RunConfig {
    // system parameters
    int n_balls = 2;
    int dim = 3;
    double radius = 0.1;
    double box = 1.0;
    std::vector<double> masses = {1.0, 1.0};
    double rank_tol = 1e-8;
    double tangency_tol = 1e-9;
    double simultaneity_tol = 1e-10;

    // initial condition
    std::uint64_t seed = 1;
    std::string state_file; ///< explicit start state; empty = sample from seed

    // stop condition
    std::size_t events = 1000;
    double max_time = 0.0; ///< 0 = unused

    // outputs
    std::string out; ///< primary output path (subcommand-specific)

    // subcommand options
    std::size_t samples = 100;
    int richness_target = 0; ///< 0 = ceil(C(N))
    std::size_t renorm_every = 1;
    std::size_t post_events = 20;
    double mass_min = 0.0, mass_max = 0.0; ///< 0 = fixed masses from `masses`
    double box_min = 0.0, box_max = 0.0;   ///< 0 = fixed box
    double horizon = 0.0;
    double accumulation_floor = 0.0;
    std::size_t event_cap = 10000;
    std::size_t threads = 1;
    std::string seq_file;  ///< input for `richness`
    std::string traj_file; ///< event-log cross-check input for `sufficiency`

    SystemParams params() const {
        SystemParams p;
        p.n_balls = n_balls;
        p.dim = dim;
        p.radius = radius;
        p.box = box;
        p.masses = masses;
        p.rank_tol = rank_tol;
        p.tangency_tol = tangency_tol;
        p.simultaneity_tol = simultaneity_tol;
        p.validate();
        return p;
    }

    void validate() const {
        params(); // SystemParams invariants, including m_i > 0 and box > 4r
        if (mass_min != 0.0 || mass_max != 0.0)
            if (mass_min <= 0.0 || mass_max < mass_min)
                throw DomainError("mass range must be positive and ordered");
        if (box_min != 0.0 || box_max != 0.0) {
            if (box_min <= 4.0 * radius)
                throw DomainError("box_min must exceed 4*radius (room guard)");
            if (box_max < box_min) throw DomainError("box range must be ordered");
        }
    }
};

namespace detail {

template <typename T>
std::string kv(const std::string& key, const T& value) {
    std::ostringstream ss;
    ss << key << " = " << value << "\n";
    return ss.str();
}

inline std::string kv(const std::string& key, double value) {
    return key + " = " + full_digits(value) + "\n";
}

} // namespace detail

inline std::string config_text(const RunConfig& c) {
    std::ostringstream out;
    out << "# run configuration\n";
    out << detail::kv("n_balls", c.n_balls);
    out << detail::kv("dim", c.dim);
    out << detail::kv("radius", c.radius);
    out << detail::kv("box", c.box);
    {
        std::ostringstream ms;
        for (std::size_t i = 0; i < c.masses.size(); ++i)
            ms << (i ? "," : "") << full_digits(c.masses[i]);
        out << "masses = " << ms.str() << "\n";
    }
    out << detail::kv("rank_tol", c.rank_tol);
    out << detail::kv("tangency_tol", c.tangency_tol);
    out << detail::kv("simultaneity_tol", c.simultaneity_tol);
    out << detail::kv("seed", c.seed);
    out << detail::kv("state_file", c.state_file);
    out << detail::kv("events", c.events);
    out << detail::kv("max_time", c.max_time);
    out << detail::kv("out", c.out);
    out << detail::kv("samples", c.samples);
    out << detail::kv("richness_target", c.richness_target);
    out << detail::kv("renorm_every", c.renorm_every);
    out << detail::kv("post_events", c.post_events);
    out << detail::kv("mass_min", c.mass_min);
    out << detail::kv("mass_max", c.mass_max);
    out << detail::kv("box_min", c.box_min);
    out << detail::kv("box_max", c.box_max);
    out << detail::kv("horizon", c.horizon);
    out << detail::kv("accumulation_floor", c.accumulation_floor);
    out << detail::kv("event_cap", c.event_cap);
    out << detail::kv("threads", c.threads);
    out << detail::kv("seq_file", c.seq_file);
    out << detail::kv("traj_file", c.traj_file);
    return out.str();
}

inline void save_config(const RunConfig& c, const std::string& path) {
    atomic_write(path, config_text(c));
}

/// Parse `key = value` lines; '#' starts a comment. Unknown keys are rejected
/// by name; malformed lines carry line/column positions.
inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::string line;
    int lineno = 0;
    auto parse_masses = [](const std::string& text) {
        std::vector<double> out;
        std::string item;
        std::istringstream ss(text);
        while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
        return out;
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        std::string body = hash == std::string::npos ? line : line.substr(0, hash);
        if (body.find_first_not_of(" \t") == std::string::npos) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value'", lineno, 1);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", lineno, 1);
        try {
            if (key == "n_balls") c.n_balls = static_cast<int>(parse_int(value));
            else if (key == "dim") c.dim = static_cast<int>(parse_int(value));
            else if (key == "radius") c.radius = parse_double(value);
            else if (key == "box") c.box = parse_double(value);
            else if (key == "masses") c.masses = parse_masses(value);
            else if (key == "rank_tol") c.rank_tol = parse_double(value);
            else if (key == "tangency_tol") c.tangency_tol = parse_double(value);
            else if (key == "simultaneity_tol") c.simultaneity_tol = parse_double(value);
            else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(value));
            else if (key == "state_file") c.state_file = value;
            else if (key == "events") c.events = static_cast<std::size_t>(parse_int(value));
            else if (key == "max_time") c.max_time = parse_double(value);
            else if (key == "out") c.out = value;
            else if (key == "samples") c.samples = static_cast<std::size_t>(parse_int(value));
            else if (key == "richness_target")
                c.richness_target = static_cast<int>(parse_int(value));
            else if (key == "renorm_every")
                c.renorm_every = static_cast<std::size_t>(parse_int(value));
            else if (key == "post_events")
                c.post_events = static_cast<std::size_t>(parse_int(value));
            else if (key == "mass_min") c.mass_min = parse_double(value);
            else if (key == "mass_max") c.mass_max = parse_double(value);
            else if (key == "box_min") c.box_min = parse_double(value);
            else if (key == "box_max") c.box_max = parse_double(value);
            else if (key == "horizon") c.horizon = parse_double(value);
            else if (key == "accumulation_floor")
                c.accumulation_floor = parse_double(value);
            else if (key == "event_cap")
                c.event_cap = static_cast<std::size_t>(parse_int(value));
            else if (key == "threads") c.threads = static_cast<std::size_t>(parse_int(value));
            else if (key == "seq_file") c.seq_file = value;
            else if (key == "traj_file") c.traj_file = value;
            else
                throw ConfigError("unknown configuration key '" + key + "'", lineno, 1);
        } catch (const IoError& e) {
            throw ConfigError(std::string(e.what()) + " for key '" + key + "'", lineno,
                              static_cast<int>(eq + 2));
        }
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::istringstream in(read_file(path));
    RunConfig c = parse_config(in);
    c.validate();
    return c;
}

/// write_report companion of load_config: survey reports go to `path` (csv)
/// and `path`.summary.
inline void write_report(const SurveyReport& report, const std::string& path) {
    write_survey_report(report, path, path + ".summary");
}

// --- subcommands -------------------------------------------------------------

namespace cli_detail {

inline PhaseState initial_state(const RunConfig& cfg, const SystemParams& p) {
    if (!cfg.state_file.empty()) return read_state_file(cfg.state_file, p);
    Rng rng(cfg.seed);
    return sample_phase_point(p, rng);
}

inline SimulateOptions simulate_options(const RunConfig& cfg) {
    SimulateOptions opt;
    opt.max_events = cfg.events;
    if (cfg.max_time > 0.0) opt.max_time = cfg.max_time;
    opt.horizon = cfg.horizon;
    opt.accumulation_floor = cfg.accumulation_floor;
    return opt;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    const SystemParams p = cfg.params();
    const PhaseState s0 = initial_state(cfg, p);
    const Trajectory traj = simulate(s0, simulate_options(cfg), p);
    out << "events " << traj.events.size() << "\n";
    out << "final_time " << full_digits(traj.final_state.time) << "\n";
    out << "min_gap " << full_digits(traj.min_gap) << "\n";
    out << "singular_flags " << traj.singular_flags.size() << "\n";
    if (!cfg.out.empty()) {
        write_trajectory_file(cfg.out, traj, p);
        out << "trajectory_written " << cfg.out << "\n";
    }
    return 0;
}

inline int cmd_sufficiency(const RunConfig& cfg, std::ostream& out) {
    const SystemParams p = cfg.params();
    const PhaseState s0 = initial_state(cfg, p);
    const Trajectory traj = simulate(s0, simulate_options(cfg), p);
    if (!cfg.traj_file.empty()) {
        // cross-check mode: the segment must reproduce the given event log
        const auto file_records = read_trajectory_file(cfg.traj_file);
        const auto records = event_records(traj, p);
        if (!(records == file_records))
            throw DomainError("re-simulated events do not match " + cfg.traj_file +
                              " (params/state/seed mismatch?)");
    }
    if (!traj.nonsingular()) {
        if (traj.has_flag(SingularKind::double_collision) &&
            traj.singular_flags.size() == 1 && traj.pending_pairs.size() == 2) {
            const bool ok = both_branches_sufficient(traj, cfg.post_events, p);
            out << "double_collision true\n";
            out << "both_branches_sufficient " << (ok ? "true" : "false") << "\n";
            return 0;
        }
        throw SingularSegment("segment carries singular flags; no verdict");
    }
    const SufficiencyResult r = is_sufficient(traj, p);
    out << "n_collisions " << r.neutral.n_collisions << "\n";
    out << "richness " << richness(traj.sequence) << "\n";
    out << "dimension " << r.neutral.dimension << "\n";
    out << "sufficient " << (r.sufficient ? "true" : "false") << "\n";
    std::ostringstream record;
    write_neutral_result(record, r.neutral);
    if (!cfg.out.empty()) {
        atomic_write(cfg.out, record.str());
        out << "neutral_written " << cfg.out << "\n";
    } else {
        out << record.str();
    }
    return 0;
}

inline int cmd_richness(const RunConfig& cfg, std::ostream& out) {
    if (cfg.seq_file.empty())
        throw ConfigError("richness needs seq_file (--seq)");
    SymbolicSequence seq = read_sequence_file(cfg.seq_file);
    if (cfg.n_balls > seq.n_balls) seq.n_balls = cfg.n_balls;
    const int rich = richness(seq);
    const Rational c = threshold_C(seq.n_balls);
    out << "n_balls " << seq.n_balls << "\n";
    out << "length " << seq.size() << "\n";
    out << "richness " << rich << "\n";
    out << "C(" << seq.n_balls << ") " << c.str() << " (= " << c.to_double() << ")\n";
    out << "rich " << (rich >= richness_target(seq.n_balls) ? "true" : "false") << "\n";
    if (auto w = find_witness(seq)) {
        out << "witness (" << w->k0 << "," << w->p << "," << w->q << ")\n";
        out << "witness_valid " << (validate_witness(seq, *w) ? "true" : "false")
            << "\n";
    } else {
        out << "witness none\n";
    }
    return 0;
}

inline int cmd_lyapunov(const RunConfig& cfg, std::ostream& out) {
    const SystemParams p = cfg.params();
    const PhaseState s0 = initial_state(cfg, p);
    const LyapunovSpectrum spec =
        lyapunov_spectrum(s0, cfg.events, cfg.renorm_every, p, cfg.seed);
    std::ostringstream record;
    write_spectrum(record, spec, p, cfg.seed);
    if (!cfg.out.empty()) {
        atomic_write(cfg.out, record.str());
        out << "spectrum_written " << cfg.out << "\n";
    } else {
        out << record.str();
    }
    out << "lambda_max " << full_digits(spec.exponents.front().value) << " +- "
        << full_digits(spec.exponents.front().stderr_) << "\n";
    return 0;
}

inline SurveyConfig survey_config(const RunConfig& cfg) {
    SurveyConfig sc;
    sc.params_template = cfg.params();
    sc.ranges.mass_min = cfg.mass_min > 0.0 ? cfg.mass_min : cfg.masses.front();
    sc.ranges.mass_max = cfg.mass_max > 0.0 ? cfg.mass_max : cfg.masses.front();
    sc.ranges.box_min = cfg.box_min > 0.0 ? cfg.box_min : cfg.box;
    sc.ranges.box_max = cfg.box_max > 0.0 ? cfg.box_max : cfg.box;
    sc.n_samples = cfg.samples;
    sc.master_seed = cfg.seed;
    sc.richness_target = cfg.richness_target;
    sc.event_cap = cfg.event_cap;
    sc.n_threads = cfg.threads;
    return sc;
}

inline int cmd_survey(const RunConfig& cfg, std::ostream& out, const std::string& mode) {
    SurveyConfig sc = survey_config(cfg);
    sc.mode = mode;
    const SurveyReport report = run_survey(sc);
    if (cfg.out.empty()) throw ConfigError(mode + " needs an output path (--out)");
    write_report(report, cfg.out);
    out << "samples " << report.samples.size() << "\n";
    out << "eligible " << report.eligible() << "\n";
    out << "sufficient " << report.count("sufficient") << "\n";
    out << "report_written " << cfg.out << "\n";
    return 0;
}

} // namespace cli_detail

/// Entry point behind the binary: parses flags, merges them over the config
/// file, dispatches the subcommand. Exit codes: 0 success, 1 usage/config
/// error, 2 numerical failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"hard-ball dynamics toolkit: event-driven simulation, collision "
                 "sequence combinatorics, neutral spaces, Lyapunov spectra"};
    app.require_subcommand(1);

    std::string config_path;
    RunConfig cfg;

    // flag staging: only values the user actually passed override the file
    std::map<std::string, std::string> flag;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value configuration file");
        sub->add_option("--seed", flag["seed"], "rng seed");
        sub->add_option("--events", flag["events"], "max collision events");
        sub->add_option("--time", flag["max_time"], "max simulated time");
        sub->add_option("--out", flag["out"], "output path");
        sub->add_option("--samples", flag["samples"], "survey sample count");
        sub->add_option("--nu", flag["dim"], "space dimension");
        sub->add_option("--n-balls", flag["n_balls"], "number of balls");
        sub->add_option("--radius", flag["radius"], "ball radius");
        sub->add_option("--box", flag["box"], "torus size");
        sub->add_option("--masses", flag["masses"], "comma-separated masses");
        sub->add_option("--rank-tol", flag["rank_tol"], "nullspace rank tolerance");
        sub->add_option("--horizon", flag["horizon"], "event search horizon");
        sub->add_option("--state", flag["state_file"], "explicit start state file");
        sub->add_option("--richness-target", flag["richness_target"],
                        "override ceil(C(N))");
        sub->add_option("--renorm-every", flag["renorm_every"],
                        "events between re-orthonormalizations");
        sub->add_option("--post-events", flag["post_events"],
                        "branch continuation length");
        sub->add_option("--mass-range", flag["mass_range"], "lo,hi for sampled masses");
        sub->add_option("--box-range", flag["box_range"], "lo,hi for sampled box");
        sub->add_option("--event-cap", flag["event_cap"], "survey segment cap");
        sub->add_option("--threads", flag["threads"], "survey worker threads");
        sub->add_option("--seq", flag["seq_file"], "collision sequence file");
        sub->add_option("--traj", flag["traj_file"], "trajectory event-log file");
    };

    CLI::App* c_sim = app.add_subcommand("simulate", "run a trajectory, export events");
    CLI::App* c_suf = app.add_subcommand("sufficiency",
                                         "neutral-space analysis of a segment");
    CLI::App* c_rich = app.add_subcommand("richness",
                                          "analyze a collision sequence file");
    CLI::App* c_lya = app.add_subcommand("lyapunov", "Lyapunov spectrum estimate");
    CLI::App* c_sur = app.add_subcommand("survey", "sufficiency survey over sampled "
                                                   "masses and box sizes");
    CLI::App* c_ans = app.add_subcommand("ansatz", "forward-orbit sufficiency from "
                                                   "tangential reflections");
    for (CLI::App* sub : {c_sim, c_suf, c_rich, c_lya, c_sur, c_ans}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return 0;
        }
        err << "usage error: " << e.what() << "\n";
        err << "remedy: run with --help for the flag list\n";
        return 1;
    }

    try {
        if (!config_path.empty()) cfg = load_config(config_path);

        auto take = [&](const std::string& key, auto setter) {
            auto it = flag.find(key);
            if (it != flag.end() && !it->second.empty()) setter(it->second);
        };
        take("seed", [&](const std::string& v) {
            cfg.seed = static_cast<std::uint64_t>(parse_int(v));
        });
        take("events", [&](const std::string& v) {
            cfg.events = static_cast<std::size_t>(parse_int(v));
        });
        take("max_time", [&](const std::string& v) { cfg.max_time = parse_double(v); });
        take("out", [&](const std::string& v) { cfg.out = v; });
        take("samples", [&](const std::string& v) {
            cfg.samples = static_cast<std::size_t>(parse_int(v));
        });
        take("dim", [&](const std::string& v) {
            cfg.dim = static_cast<int>(parse_int(v));
        });
        take("n_balls", [&](const std::string& v) {
            const int n = static_cast<int>(parse_int(v));
            if (n != cfg.n_balls &&
                static_cast<int>(cfg.masses.size()) == cfg.n_balls &&
                cfg.masses == std::vector<double>(cfg.masses.size(), cfg.masses.front()))
                cfg.masses.assign(n, cfg.masses.front()); // grow uniform defaults
            cfg.n_balls = n;
        });
        take("radius", [&](const std::string& v) { cfg.radius = parse_double(v); });
        take("box", [&](const std::string& v) { cfg.box = parse_double(v); });
        take("masses", [&](const std::string& v) {
            std::vector<double> ms;
            std::istringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) ms.push_back(parse_double(item));
            cfg.masses = ms;
            cfg.n_balls = static_cast<int>(ms.size());
        });
        take("rank_tol", [&](const std::string& v) { cfg.rank_tol = parse_double(v); });
        take("horizon", [&](const std::string& v) { cfg.horizon = parse_double(v); });
        take("state_file", [&](const std::string& v) { cfg.state_file = v; });
        take("richness_target", [&](const std::string& v) {
            cfg.richness_target = static_cast<int>(parse_int(v));
        });
        take("renorm_every", [&](const std::string& v) {
            cfg.renorm_every = static_cast<std::size_t>(parse_int(v));
        });
        take("post_events", [&](const std::string& v) {
            cfg.post_events = static_cast<std::size_t>(parse_int(v));
        });
        take("event_cap", [&](const std::string& v) {
            cfg.event_cap = static_cast<std::size_t>(parse_int(v));
        });
        take("threads", [&](const std::string& v) {
            cfg.threads = static_cast<std::size_t>(parse_int(v));
        });
        take("seq_file", [&](const std::string& v) { cfg.seq_file = v; });
        take("traj_file", [&](const std::string& v) { cfg.traj_file = v; });
        auto parse_range = [&](const std::string& v, double& lo, double& hi) {
            const auto comma = v.find(',');
            if (comma == std::string::npos)
                throw ConfigError("range needs 'lo,hi': '" + v + "'");
            lo = parse_double(v.substr(0, comma));
            hi = parse_double(v.substr(comma + 1));
        };
        take("mass_range", [&](const std::string& v) {
            parse_range(v, cfg.mass_min, cfg.mass_max);
        });
        take("box_range", [&](const std::string& v) {
            parse_range(v, cfg.box_min, cfg.box_max);
        });

        cfg.validate();

        if (app.got_subcommand(c_sim)) return cli_detail::cmd_simulate(cfg, out);
        if (app.got_subcommand(c_suf)) return cli_detail::cmd_sufficiency(cfg, out);
        if (app.got_subcommand(c_rich)) return cli_detail::cmd_richness(cfg, out);
        if (app.got_subcommand(c_lya)) return cli_detail::cmd_lyapunov(cfg, out);
        if (app.got_subcommand(c_sur)) return cli_detail::cmd_survey(cfg, out, "sufficiency");
        if (app.got_subcommand(c_ans)) return cli_detail::cmd_survey(cfg, out, "ansatz");
        err << "usage error: no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const RangeError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}

} // namespace hardball

#endif
