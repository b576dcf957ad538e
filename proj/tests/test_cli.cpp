#include <filesystem>
#include <random>
#include <sstream>

#include "carbonmfg/commands.hpp"
#include "doctest.h"

using namespace carbonmfg;
namespace fs = std::filesystem;

namespace {

std::string baseline_text() {
  return read_file(fs::path(CARBONMFG_SOURCE_DIR) / "configs" / "baseline.toml");
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

// Baseline constants on a 2-year horizon with the same step, small grids and
// few paths.
std::string small_text() {
  std::string t = baseline_text();
  t = replace(t, "horizon = 20.0", "horizon = 2.0");
  t = replace(t, "n_steps = 730", "n_steps = 73");
  t = replace(t, "tau_grid = [0, 10, 15, 20, 25, 30, 40, 50, 75, 100]", "tau_grid = [0, 50, 100]");
  t = replace(t, "c2_grid = [50, 100, 250, 500, 750, 1000, 1500, 2000, 2500, 3000, 4000, 5000]",
              "c2_grid = [50, 1000]");
  t = replace(t, "n_paths = 100000", "n_paths = 2000");
  t = replace(t, "deviation_paths = 10000", "deviation_paths = 500\nn_deviations = 4");
  t = replace(t, "costate_paths = 10000", "costate_paths = 500");
  return t;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("carbonmfg_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorCode config_error_code(const std::string& text) {
  try {
    parse_config(text);
  } catch (const SolverError& e) {
    return e.code();
  }
  FAIL("config was accepted");
  return ErrorCode::kInvalidParams;
}

int run(Command command, const fs::path& config, const fs::path& out, int workers = 1,
        std::optional<std::uint64_t> seed = std::nullopt) {
  RunOptions opt;
  opt.command = command;
  opt.config_path = config.string();
  opt.out_dir = out.string();
  opt.workers = workers;
  opt.seed = seed;
  std::ostringstream log;
  std::ostringstream err;
  return run_command(opt, log, err);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("baseline config loads with per-step rates converted") {
  const auto cfg = parse_config(baseline_text());
  const double dt = 20.0 / 730;
  CHECK(cfg.n_steps == 730);
  CHECK(cfg.producer.p1 == doctest::Approx(7.0 / dt).epsilon(1e-15));
  CHECK(cfg.producer.rho1 == doctest::Approx(0.1 / dt).epsilon(1e-15));
  CHECK(cfg.regulator.tau_grid.size() == 10);
  CHECK(cfg.regulator.c2_grid.size() == 12);
  CHECK(std::isinf(cfg.regulator.walkaway_threshold));
  CHECK(cfg.regulator.pbar0 == 0.0);
  CHECK(cfg.sim.sim.seed == 20240101u);
  CHECK(cfg.policy.tau == 50.0);
}

TEST_CASE("malformed configs are rejected as config errors") {
  const std::string t = baseline_text();
  CHECK(config_error_code(replace(t, "c1 = 1e-4", "c1 = 1e-4\nc9 = 2.0")) == ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "[policy]", "[extra]\nx = 1\n[policy]")) == ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "c3 = 1.0\n", "")) == ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "c1 = 1e-4", "c1 = \"small\"")) == ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "c1 = 1e-4", "c1 = 0.0")) == ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "xbar0 = [0.0, 5.0, 0.0, 0.0, 0.0]", "xbar0 = [0.0, 5.0]")) ==
        ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "tau_grid = [0, 10,", "tau_grid = [10, 0,")) ==
        ErrorCode::kConfig);
  CHECK(config_error_code(replace(t, "n_steps = 730", "n_steps = 1")) == ErrorCode::kConfig);
  CHECK(config_error_code("[grid\nhorizon = 1") == ErrorCode::kConfig);
  try {
    load_config("/nonexistent/carbonmfg.toml");
    FAIL("expected IOError");
  } catch (const SolverError& e) {
    CHECK(e.code() == ErrorCode::kIO);
  }
}

TEST_CASE("config hash ignores layout, comments, key order and output dir") {
  const std::string t = baseline_text();
  const auto h = config_hash(parse_config(t));
  CHECK(h.size() == 64);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  std::string moved = replace(t, "c1 = 1e-4\nc3 = 1.0\n", "c3 = 1.0\n");
  moved = replace(moved, "delta = 0.15\n", "delta = 0.15\n# moved\nc1    =   0.0001\n");
  moved += "\n[output]\ndir = \"elsewhere\"\n";
  CHECK(config_hash(parse_config(moved)) == h);
  CHECK(config_hash(parse_config(replace(t, "seed = 20240101", "seed = 20240102"))) != h);
  CHECK(config_hash(parse_config(replace(t, "theta = 5.0", "theta = 5.000001"))) != h);
}

TEST_CASE("numbers round-trip through their shortest text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> exponent(-300.0, 300.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = (i % 2 ? -1.0 : 1.0) * std::pow(10.0, exponent(rng));
    CHECK(parse_double(format_double(x)) == x);
  }
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(format_double(inf) == "inf");
  CHECK(format_double(-inf) == "-inf");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-0.0) == "0");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(4547513053755.953) == "4547513053755.953");
  CHECK(parse_double("inf") == inf);
  CHECK(parse_double("-inf") == -inf);
  CHECK(std::isnan(parse_double("nan")));
  CHECK_THROWS_AS(parse_double("1.5x"), SolverError);
  CHECK_THROWS_AS(parse_double(""), SolverError);
}

TEST_CASE("CSV quoting follows RFC 4180 with LF endings") {
  CsvTable t({"name", "value"});
  t.row({"plain", "1"});
  t.row({"with,comma", "2"});
  t.row({"say \"hi\"", "inf"});
  t.row({"two\nlines", ""});
  const std::string text = t.str();
  CHECK(text ==
        "name,value\nplain,1\n\"with,comma\",2\n\"say \"\"hi\"\"\",inf\n\"two\nlines\",\n");
  CHECK(text.find('\r') == std::string::npos);
  const auto back = parse_csv(text);
  CHECK(back.header() == t.header());
  CHECK(back.rows() == t.rows());
  CHECK_THROWS_AS(t.row({"short"}), SolverError);
}

TEST_CASE("commands and error codes map onto the documented exit codes") {
  for (Command c : all_commands()) CHECK(parse_command(to_string(c)).value() == c);
  CHECK_FALSE(parse_command("solve").has_value());
  CHECK(to_string(Command::kPoaGrid) == std::string("poa-grid"));
  CHECK(exit_code_for(ErrorCode::kConfig) == 2);
  CHECK(exit_code_for(ErrorCode::kInvalidParams) == 2);
  CHECK(exit_code_for(ErrorCode::kIO) == 4);
  CHECK(exit_code_for(ErrorCode::kAllRejected) == 5);
  CHECK(exit_code_for(ErrorCode::kSingularMatrix) == 1);
}

TEST_CASE("run_command exit codes") {
  const fs::path dir = scratch_dir("exit");
  CHECK(run(Command::kSolveMfc, dir / "missing.toml", dir / "a") == exit_code::kIO);

  write_file(dir / "bad.toml", replace(small_text(), "c1 = 1e-4", "c1 = -1.0"));
  CHECK(run(Command::kSolveMfc, dir / "bad.toml", dir / "b") == exit_code::kConfig);

  write_file(dir / "ok.toml", small_text());
  CHECK(run(Command::kSolveMfc, dir / "ok.toml", dir / "c") == exit_code::kOk);
  CHECK(fs::exists(dir / "c" / "trajectory.csv"));
  CHECK(fs::exists(dir / "c" / "summary.json"));
  CHECK(fs::exists(dir / "c" / "manifest.json"));
  const auto traj = parse_csv(read_file(dir / "c" / "trajectory.csv"));
  CHECK(traj.rows().size() == 74);
  CHECK(traj.header().front() == "t");

  write_file(dir / "stuck.toml", small_text() + "\n[solver]\nmax_iters = 1\n");
  CHECK(run(Command::kSolveMfg, dir / "stuck.toml", dir / "d") == exit_code::kNotConverged);
  CHECK(fs::exists(dir / "d" / "trajectory.csv"));

  write_file(dir / "reject.toml",
             replace(small_text(), "walkaway_threshold = inf", "walkaway_threshold = -inf"));
  CHECK(run(Command::kStackelbergMfc, dir / "reject.toml", dir / "e") == exit_code::kAllRejected);
  CHECK(fs::exists(dir / "e" / "stackelberg.csv"));

  // A file where the output directory should be makes every write fail.
  write_file(dir / "blocked", "x");
  CHECK(run(Command::kSolveMfc, dir / "ok.toml", dir / "blocked") == exit_code::kIO);
}

TEST_CASE("Stackelberg table marks rejected cells with the inf sentinel") {
  const fs::path dir = scratch_dir("stackelberg");
  write_file(dir / "open.toml", small_text());
  REQUIRE(run(Command::kStackelbergMfc, dir / "open.toml", dir / "open") == exit_code::kOk);
  const auto open = parse_csv(read_file(dir / "open" / "stackelberg.csv"));
  const auto& h = open.header();
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
  };
  std::vector<double> costs;
  for (const auto& row : open.rows()) costs.push_back(parse_double(row[col("producer_cost")]));
  std::sort(costs.begin(), costs.end());
  REQUIRE(costs.size() == 6);
  // Walk-away exactly at the fourth cheapest cost: three cells pass, and
  // the cell sitting on the threshold is rejected.
  const double threshold = costs[3];
  write_file(dir / "cut.toml", replace(small_text(), "walkaway_threshold = inf",
                                       "walkaway_threshold = " + format_double(threshold)));
  REQUIRE(run(Command::kStackelbergMfc, dir / "cut.toml", dir / "cut") == exit_code::kOk);
  const auto table = parse_csv(read_file(dir / "cut" / "stackelberg.csv"));
  REQUIRE(table.header() == h);
  int accepted = 0;
  for (const auto& row : table.rows()) {
    const bool ok = row[col("accepted")] == "1";
    CHECK(ok == (parse_double(row[col("producer_cost")]) < threshold));
    if (ok) {
      ++accepted;
      CHECK(std::isfinite(parse_double(row[col("J")])));
    } else {
      CHECK(row[col("J")] == "inf");
    }
  }
  CHECK(accepted == 3);
}

TEST_CASE("outputs are byte-identical across reruns and worker counts") {
  const fs::path dir = scratch_dir("determinism");
  write_file(dir / "cfg.toml", small_text());
  for (Command c : {Command::kPoaGrid, Command::kVerify}) {
    const int a = run(c, dir / "cfg.toml", dir / "w1", 1);
    const int b = run(c, dir / "cfg.toml", dir / "w3", 3);
    CHECK(a == b);
    for (const auto& entry : fs::directory_iterator(dir / "w1")) {
      const auto name = entry.path().filename();
      if (name == "manifest.json") continue;
      CAPTURE(name.string());
      CHECK(read_file(entry.path()) == read_file(dir / "w3" / name));
    }
  }
}

TEST_CASE("seed override reaches the manifest and changes the certificates") {
  const fs::path dir = scratch_dir("seed");
  write_file(dir / "cfg.toml", small_text());
  run(Command::kVerify, dir / "cfg.toml", dir / "a", 1, 7);
  run(Command::kVerify, dir / "cfg.toml", dir / "b", 1, 8);
  const std::string manifest = read_file(dir / "a" / "manifest.json");
  CHECK(manifest.find("\"sim_seed\": 7") != std::string::npos);
  CHECK(manifest.find("\"seed_overridden\": true") != std::string::npos);
  CHECK(read_file(dir / "a" / "verify.csv") != read_file(dir / "b" / "verify.csv"));
}

}  // TEST_SUITE
