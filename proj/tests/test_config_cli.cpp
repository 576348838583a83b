#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spde/experiments.hpp"

using namespace spde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("spde_test_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config text parsing") {
    const std::string text =
        "# experiment\n"
        "kind = closed_loop\n"
        "truncation = 12   # comment after the value\n"
        "a = 1.5\n"
        "region = 0-1.5707963267948966\n"
        "lambda_grid = 1,4,9\n"
        "\n"
        "strict = true\n";
    const ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.kind == ExperimentKind::closed_loop);
    CHECK(cfg.truncation == 12);
    CHECK(cfg.a == 1.5);
    CHECK(cfg.region == "0-1.5707963267948966");
    CHECK(cfg.lambda_grid == std::vector<double>{1.0, 4.0, 9.0});
    CHECK(cfg.strict);

    CHECK_THROWS_AS(parse_config_text("bogus_key = 1\n"), validation_error);
    CHECK_THROWS_AS(parse_config_text("dt ten\n"), validation_error);
    CHECK_THROWS_AS(parse_config_text("dt = ten\n"), validation_error);
    CHECK_THROWS_WITH_AS(parse_config_text("n_paths = many\n"), doctest::Contains("n_paths"),
                         validation_error);
}

TEST_CASE("serialize / parse round trip") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::null_control;
    cfg.truncation = 290;
    cfg.a = 0.75;
    cfg.c = -0.25;
    cfg.dt = 0.00125;
    cfg.seed = 987654321;
    cfg.region = "0-3.141592653589793";
    cfg.lambda_grid = {1.0, 4.0};
    cfg.plan_gamma = 16.0;
    cfg.plan_enforce_gamma_bound = false;
    cfg.y0 = "decay";
    const std::string once = serialize_config(cfg);
    const ExperimentConfig back = parse_config_text(once);
    CHECK(serialize_config(back) == once); // canonical form is a fixed point
    CHECK(back.seed == cfg.seed);
    CHECK(back.dt == cfg.dt);
    CHECK(back.plan_enforce_gamma_bound == false);
}

TEST_CASE("initial state parsing") {
    CHECK(parse_initial_state("e1", 3) == ModeVector{1.0, 0.0, 0.0});
    const ModeVector eq = parse_initial_state("equal", 4);
    CHECK(norm_sq(eq) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(eq[0] == eq[3]);
    const ModeVector dec = parse_initial_state("decay", 4);
    CHECK(norm_sq(dec) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(dec[0] == doctest::Approx(2.0 * dec[1]).epsilon(1e-12));
    CHECK(parse_initial_state("0.5,0,0.25", 3) == ModeVector{0.5, 0.0, 0.25});
    CHECK_THROWS_AS(parse_initial_state("0.5,0", 3), validation_error);
    CHECK_THROWS_AS(parse_initial_state("fish", 3), validation_error);
}

TEST_CASE("run_experiment validation errors name the offending field") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::closed_loop;
    cfg.truncation = 12;
    cfg.region = "0.5-0.2";
    cfg.out_dir = scratch_dir("bad_region").string();
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("region"), validation_error);

    cfg.region = "0-1.5707963267948966";
    cfg.lambda = 1.5; // fails lambda > max{2 tau_1, a^2 + 2c} = 2
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("lambda"), validation_error);

    cfg.lambda = 9.0;
    cfg.scheme = "euler_maruyama";
    cfg.dt = 0.01; // far above 0.1 / rho(A) for the stiff closed loop
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("dt"), validation_error);
}

TEST_CASE("gram_report emits certificate files") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::gram_report;
    cfg.truncation = 12;
    cfg.region = "0-1.5707963267948966";
    cfg.lambda_grid = {1.0, 4.0, 9.0};
    const fs::path dir = scratch_dir("gram");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.exit_code == 0);
    REQUIRE(res.calibration.has_value());
    CHECK(certificate_holds(*res.calibration));
    CHECK(fs::exists(dir / "gram.csv"));
    CHECK(fs::exists(dir / "manifest.txt"));
    const std::string gram = slurp(dir / "gram.csv");
    CHECK(gram.find("lambda,N_lambda,lambda_min,bound") == 0);
    CHECK(gram.find("0.5") != std::string::npos); // J_11 on the half domain
    const std::string manifest = slurp(dir / "manifest.txt");
    CHECK(manifest.find("constant_C") != std::string::npos);
    CHECK(manifest.find("seed = 12345") != std::string::npos);
}

TEST_CASE("uncontrolled experiment writes decay.csv and a trajectory dump") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::uncontrolled;
    cfg.truncation = 1;
    cfg.a = 1.0;
    cfg.t_end = 1.0;
    cfg.dt = 0.01;
    cfg.n_paths = 200;
    cfg.fit_t_lo = 0.2;
    cfg.fit_t_hi = 1.0;
    cfg.dump_trajectories = 1;
    const fs::path dir = scratch_dir("uncontrolled");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.exit_code == 0);
    REQUIRE(res.mean_square.has_value());
    const std::string decay = slurp(dir / "decay.csv");
    CHECK(decay.find("quantity,exponent,intercept,r2,t_lo,t_hi,n_paths,seed") == 0);
    CHECK(decay.find("mean_square,") != std::string::npos);
    const std::string traj = slurp(dir / "trajectory_0.csv");
    CHECK(traj.find("t,W,y_1,norm_sq") == 0);

    // a single-path run dumps its trajectory without being asked
    cfg.n_paths = 1;
    cfg.dump_trajectories = 0;
    cfg.fit_t_lo = 0.0;
    cfg.fit_t_hi = 0.0;
    const fs::path dir1 = scratch_dir("single_path");
    cfg.out_dir = dir1.string();
    CHECK_THROWS_AS(run_experiment(cfg), validation_error); // < 100 paths cannot be fitted
    cfg.kind = ExperimentKind::as_exponent;
    cfg.t_eval = 50.0;
    cfg.t_end = 50.0;
    run_experiment(cfg);
    CHECK(fs::exists(dir1 / "trajectory_0.csv"));
}

TEST_CASE("ensemble output is byte-identical across worker counts") {
    auto run_with = [](int workers, const std::string& tag) {
        ExperimentConfig cfg;
        cfg.kind = ExperimentKind::closed_loop;
        cfg.truncation = 12;
        cfg.region = "0-1.5707963267948966";
        cfg.lambda = 9.0;
        cfg.a = 1.0;
        cfg.dt = 0.005;
        cfg.t_end = 1.0;
        cfg.n_paths = 300;
        cfg.fit_t_lo = 0.2;
        cfg.fit_t_hi = 1.0;
        cfg.workers = workers;
        const fs::path dir = scratch_dir("det_" + tag);
        cfg.out_dir = dir.string();
        run_experiment(cfg);
        return std::pair{slurp(dir / "decay.csv"), slurp(dir / "gram.csv")};
    };
    const auto [d1, g1] = run_with(1, "w1");
    const auto [d4, g4] = run_with(4, "w4");
    CHECK(d1 == d4);
    CHECK(g1 == g4);
    CHECK(d1.find("feedback_energy") != std::string::npos);
}

TEST_CASE("strict mode turns an unreliable fit into exit code 4") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::uncontrolled;
    cfg.truncation = 1;
    cfg.c = 0.5; // 2(c - tau_1) + a^2 = 0: flat noisy curve
    cfg.a = 1.0;
    cfg.t_end = 5.0;
    cfg.dt = 0.02;
    cfg.n_paths = 150;
    cfg.seed = 9;
    cfg.strict = true;
    const fs::path dir = scratch_dir("strict");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.exit_code == 4);
    CHECK(!res.warnings.empty());
}

TEST_CASE("as_exponent experiment emits the three statistics") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::as_exponent;
    cfg.truncation = 1;
    cfg.a = 1.0;
    cfg.t_eval = 50.0;
    cfg.dt = 0.05;
    cfg.n_paths = 300;
    const fs::path dir = scratch_dir("as");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.lyapunov.has_value());
    const std::string decay = slurp(dir / "decay.csv");
    CHECK(decay.find("as_exponent_mean,") != std::string::npos);
    CHECK(decay.find("as_exponent_max,") != std::string::npos);
    CHECK(decay.find("as_exponent_p95,") != std::string::npos);

    cfg.t_eval = 2.0; // transient precondition 2 log(t)/t < 0.1 |rate| fails
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("t_eval"), validation_error);
}

TEST_CASE("convergence experiment emits level errors and the fitted order") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::convergence;
    cfg.truncation = 1;
    cfg.a = 1.0;
    cfg.t_end = 1.0;
    cfg.scheme = "euler_maruyama";
    cfg.n_paths = 100;
    cfg.dt_levels = {0.0625, 0.03125, 0.015625, 0.0078125};
    const fs::path dir = scratch_dir("conv");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.convergence.has_value());
    CHECK(res.convergence->determined);
    const std::string decay = slurp(dir / "decay.csv");
    CHECK(decay.find("strong_order_euler_maruyama,") != std::string::npos);
    const std::string lvl = slurp(dir / "convergence.csv");
    CHECK(lvl.find("dt,strong_error") == 0);
}

TEST_CASE("null_control experiment writes plan.csv") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::null_control;
    cfg.truncation = 28;
    cfg.region = "0-2.2";
    cfg.lambda_grid = {4.0};
    cfg.a = 1.0;
    cfg.plan_T = 1.0;
    cfg.plan_gamma = 1.5;
    cfg.plan_enforce_gamma_bound = false;
    cfg.plan_n_max = 3;
    cfg.dt = 0.005;
    cfg.n_paths = 32;
    cfg.y0 = "decay";
    const fs::path dir = scratch_dir("plan");
    cfg.out_dir = dir.string();
    const ExperimentResult res = run_experiment(cfg);
    REQUIRE(res.controlled_run.has_value());
    const std::string plan = slurp(dir / "plan.csv");
    CHECK(plan.find("n,T_n,lambda_n,N_lambda,gamma_lambda,E_norm_sq_at_Tn,segment_energy,"
                    "cumulative_energy,bound_value") == 0);
    CHECK(!res.warnings.empty()); // uncertified-gamma warning present
}
