#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "hardball/cli.hpp"

using namespace hardball;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / "hardball_cli_test";
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::vector<std::string>& args, std::string& out,
            std::string& err) {
    std::vector<std::string> argv_s{"hardball"};
    for (const auto& a : args) argv_s.push_back(a);
    std::vector<const char*> argv;
    for (const auto& s : argv_s) argv.push_back(s.c_str());
    std::ostringstream o, e;
    const int code = run(static_cast<int>(argv.size()), argv.data(), o, e);
    out = o.str();
    err = e.str();
    return code;
}

} // namespace

TEST_CASE("config round-trips every field exactly") {
    TempDir tmp;
    RunConfig c;
    c.n_balls = 3;
    c.dim = 3;
    c.radius = 0.3125;
    c.box = 5.0625;
    c.masses = {1.0, 2.0, 3.0};
    c.rank_tol = 2.5e-9;
    c.tangency_tol = 1e-10;
    c.simultaneity_tol = 1e-11;
    c.seed = 987654321;
    c.state_file = "state.txt";
    c.events = 4321;
    c.max_time = 1.25;
    c.out = "out.txt";
    c.samples = 333;
    c.richness_target = 7;
    c.renorm_every = 3;
    c.post_events = 11;
    c.mass_min = 0.5;
    c.mass_max = 2.0;
    c.box_min = 4.0;
    c.box_max = 8.0;
    c.horizon = 0.75;
    c.accumulation_floor = 1e-12;
    c.event_cap = 5000;
    c.threads = 2;
    c.seq_file = "seq.txt";
    c.traj_file = "traj.txt";

    save_config(c, tmp.file("cfg.txt"));
    const RunConfig back = load_config(tmp.file("cfg.txt"));
    REQUIRE(back.n_balls == c.n_balls);
    REQUIRE(back.dim == c.dim);
    REQUIRE(back.radius == c.radius);
    REQUIRE(back.box == c.box);
    REQUIRE(back.masses == c.masses);
    REQUIRE(back.rank_tol == c.rank_tol);
    REQUIRE(back.tangency_tol == c.tangency_tol);
    REQUIRE(back.simultaneity_tol == c.simultaneity_tol);
    REQUIRE(back.seed == c.seed);
    REQUIRE(back.state_file == c.state_file);
    REQUIRE(back.events == c.events);
    REQUIRE(back.max_time == c.max_time);
    REQUIRE(back.out == c.out);
    REQUIRE(back.samples == c.samples);
    REQUIRE(back.richness_target == c.richness_target);
    REQUIRE(back.renorm_every == c.renorm_every);
    REQUIRE(back.post_events == c.post_events);
    REQUIRE(back.mass_min == c.mass_min);
    REQUIRE(back.mass_max == c.mass_max);
    REQUIRE(back.box_min == c.box_min);
    REQUIRE(back.box_max == c.box_max);
    REQUIRE(back.horizon == c.horizon);
    REQUIRE(back.accumulation_floor == c.accumulation_floor);
    REQUIRE(back.event_cap == c.event_cap);
    REQUIRE(back.threads == c.threads);
    REQUIRE(back.seq_file == c.seq_file);
    REQUIRE(back.traj_file == c.traj_file);
}

TEST_CASE("config rejects bad input with positions and key names") {
    std::istringstream unknown("whatever = 3\n");
    try {
        parse_config(unknown);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("whatever") != std::string::npos);
        REQUIRE(e.line == 1);
    }

    std::istringstream noeq("n_balls 3\n");
    REQUIRE_THROWS_AS(parse_config(noeq), ConfigError);

    std::istringstream badnum("\n\nradius = abc\n");
    try {
        parse_config(badnum);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.line == 3);
        REQUIRE(e.column > 0);
    }

    // invariants enforced on load
    std::istringstream negmass("masses = 1,-1\nn_balls = 2\n");
    RunConfig c = parse_config(negmass);
    REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("positive"));

    std::istringstream tight("n_balls = 2\nmasses = 1,1\nradius = 0.3\nbox = 1.0\n");
    RunConfig c2 = parse_config(tight);
    REQUIRE_THROWS_WITH(c2.validate(), Catch::Matchers::ContainsSubstring("4*radius"));
}

TEST_CASE("richness subcommand reproduces the worked sequence") {
    TempDir tmp;
    SymbolicSequence seq;
    seq.n_balls = 3;
    for (int rep = 0; rep < 5; ++rep) {
        seq.labels.emplace_back(1, 3);
        seq.labels.emplace_back(2, 3);
    }
    write_sequence_file(tmp.file("seq.txt"), seq);

    std::string out, err;
    const int code = run_cli({"richness", "--seq", tmp.file("seq.txt")}, out, err);
    REQUIRE(code == 0);
    REQUIRE(out.find("richness 5") != std::string::npos);
    REQUIRE(out.find("C(3) 9/2 (= 4.5)") != std::string::npos);
    REQUIRE(out.find("rich true") != std::string::npos);
    REQUIRE(out.find("witness (1,1,3)") != std::string::npos);
    REQUIRE(out.find("witness_valid true") != std::string::npos);
}

TEST_CASE("simulate subcommand matches closed-form head-on collision times") {
    TempDir tmp;
    // explicit two-ball head-on data; period is (L - 4r) / closing speed
    const SystemParams p = make_params(2, 3, 0.5, 10.0, {2.0, 2.0});
    PhaseState s0;
    s0.pos = Vec::Zero(6);
    ball(s0.pos, 1, 3) << 0.0, 5.0, 5.0;
    ball(s0.pos, 2, 3) << 3.0, 5.0, 5.0;
    s0.vel = Vec::Zero(6);
    ball(s0.vel, 1, 3) << 0.5, 0.0, 0.0;
    ball(s0.vel, 2, 3) << -0.5, 0.0, 0.0;
    write_state_file(tmp.file("state.txt"), s0, p);

    std::string out, err;
    const int code = run_cli({"simulate", "--n-balls", "2", "--masses", "2,2",
                              "--radius", "0.5", "--box", "10", "--events", "6",
                              "--state", tmp.file("state.txt"), "--out",
                              tmp.file("traj.txt")},
                             out, err);
    CAPTURE(err);
    REQUIRE(code == 0);
    const auto recs = read_trajectory_file(tmp.file("traj.txt"));
    REQUIRE(recs.size() == 6);
    for (std::size_t k = 0; k < recs.size(); ++k) {
        const double expected = 2.0 + 8.0 * static_cast<double>(k);
        REQUIRE(recs[k].time == Catch::Approx(expected).margin(1e-9));
        REQUIRE(recs[k].i == 1);
        REQUIRE(recs[k].j == 2);
    }
}

TEST_CASE("missing config file exits 1 with the path in the message") {
    std::string out, err;
    const int code = run_cli({"simulate", "--config", "/nonexistent/cfg.txt"}, out, err);
    REQUIRE(code == 1);
    REQUIRE(err.find("/nonexistent/cfg.txt") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with a remedy") {
    std::string out, err;
    const int code = run_cli({"frobnicate"}, out, err);
    REQUIRE(code == 1);
    REQUIRE(err.find("usage error") != std::string::npos);
    REQUIRE(err.find("remedy") != std::string::npos);

    // bad flag value
    std::string out2, err2;
    const int code2 = run_cli({"simulate", "--events"}, out2, err2);
    REQUIRE(code2 == 1);
}

TEST_CASE("numerical failures exit 2") {
    // packing too tight for rejection sampling: RejectionOverflow
    std::string out, err;
    const int code = run_cli({"simulate", "--n-balls", "8", "--masses",
                              "1,1,1,1,1,1,1,1", "--radius", "0.49", "--box",
                              "1.99", "--events", "5"},
                             out, err);
    REQUIRE(code == 2);
    REQUIRE(err.find("numerical failure") != std::string::npos);
}

TEST_CASE("sufficiency subcommand reports a verdict and writes the record") {
    TempDir tmp;
    std::string out, err;
    const int code = run_cli({"sufficiency", "--n-balls", "2", "--masses", "1,2",
                              "--radius", "0.4", "--box", "5", "--seed", "11",
                              "--events", "4", "--out", tmp.file("neutral.txt")},
                             out, err);
    CAPTURE(err);
    REQUIRE(code == 0);
    REQUIRE(out.find("dimension 1") != std::string::npos);
    REQUIRE(out.find("sufficient true") != std::string::npos);
    const std::string rec = read_file(tmp.file("neutral.txt"));
    REQUIRE(rec.find("singular_values") != std::string::npos);
}

TEST_CASE("sufficiency cross-checks a trajectory file") {
    TempDir tmp;
    std::string out, err;
    // export a trajectory, then re-run with --traj to verify consistency
    const int c1 = run_cli({"simulate", "--n-balls", "2", "--masses", "1,2",
                            "--radius", "0.4", "--box", "5", "--seed", "11",
                            "--events", "4", "--out", tmp.file("t.txt")},
                           out, err);
    REQUIRE(c1 == 0);
    const int c2 = run_cli({"sufficiency", "--n-balls", "2", "--masses", "1,2",
                            "--radius", "0.4", "--box", "5", "--seed", "11",
                            "--events", "4", "--traj", tmp.file("t.txt")},
                           out, err);
    REQUIRE(c2 == 0);
    // a mismatched seed must be caught
    std::string out3, err3;
    const int c3 = run_cli({"sufficiency", "--n-balls", "2", "--masses", "1,2",
                            "--radius", "0.4", "--box", "5", "--seed", "12",
                            "--events", "4", "--traj", tmp.file("t.txt")},
                           out3, err3);
    REQUIRE(c3 == 1);
}

TEST_CASE("lyapunov subcommand writes a spectrum file") {
    TempDir tmp;
    std::string out, err;
    const int code = run_cli({"lyapunov", "--n-balls", "2", "--masses", "1,1",
                              "--radius", "0.5", "--box", "5", "--seed", "21",
                              "--events", "400", "--renorm-every", "1", "--out",
                              tmp.file("spec.txt")},
                             out, err);
    CAPTURE(err);
    REQUIRE(code == 0);
    const std::string spec = read_file(tmp.file("spec.txt"));
    REQUIRE(spec.find("zero_modes_expected 4") != std::string::npos);
    REQUIRE(out.find("lambda_max") != std::string::npos);
}

TEST_CASE("survey subcommand is deterministic across runs") {
    TempDir tmp;
    std::string out, err;
    const auto args = [&](const std::string& name) {
        return std::vector<std::string>{
            "survey", "--n-balls", "3", "--masses", "1,1,1", "--radius", "0.3",
            "--box", "5", "--seed", "7", "--samples", "8",
            "--mass-range", "0.5,2", "--box-range", "4,8",
            "--out", tmp.file(name)};
    };
    REQUIRE(run_cli(args("a.csv"), out, err) == 0);
    REQUIRE(run_cli(args("b.csv"), out, err) == 0);
    REQUIRE(read_file(tmp.file("a.csv")) == read_file(tmp.file("b.csv")));
    REQUIRE(read_file(tmp.file("a.csv.summary")) ==
            read_file(tmp.file("b.csv.summary")));
    REQUIRE(read_file(tmp.file("a.csv")).find("sample_id,seed,mass_1") == 0);
}

TEST_CASE("ansatz subcommand produces a report") {
    TempDir tmp;
    std::string out, err;
    const int code = run_cli({"ansatz", "--n-balls", "3", "--masses", "1,1,1",
                              "--radius", "0.3", "--box", "5", "--seed", "9",
                              "--samples", "6", "--out", tmp.file("a.csv")},
                             out, err);
    CAPTURE(err);
    REQUIRE(code == 0);
    REQUIRE(read_file(tmp.file("a.csv.summary")).find("ansatz mode") !=
            std::string::npos);
}

TEST_CASE("flags override config files") {
    TempDir tmp;
    RunConfig c;
    c.n_balls = 2;
    c.masses = {1.0, 1.0};
    c.radius = 0.4;
    c.box = 5.0;
    c.seed = 1;
    c.events = 3;
    save_config(c, tmp.file("cfg.txt"));

    TempDir tmp2;
    std::string out1, out2, err;
    REQUIRE(run_cli({"simulate", "--config", tmp.file("cfg.txt")}, out1, err) == 0);
    REQUIRE(run_cli({"simulate", "--config", tmp.file("cfg.txt"), "--events", "5"},
                    out2, err) == 0);
    REQUIRE(out1.find("events 3") != std::string::npos);
    REQUIRE(out2.find("events 5") != std::string::npos);
}
