#include "dicl/trajdata.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using testing::read_text;
using testing::write_text;

namespace {

struct Run {
  int code;
  std::string err;
};

Run run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + DICL_CLI_PATH + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), read_text(err)};
}

fs::path source(const std::string& rel) { return fs::path(DICL_SOURCE_DIR) / rel; }

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

// Two i.i.d. Gaussian episodes: the in-context Gaussian is the right model.
fs::path iid_dataset(const fs::path& dir) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  dicl::trajdata::Dataset ds;
  for (int e = 0; e < 2; ++e) {
    Eigen::MatrixXd s(1500, 2);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n01(rng);
    ds.trajectories.push_back(dicl::trajdata::make_trajectory(s));
  }
  const fs::path p = dir / "iid.csv";
  dicl::trajdata::save_dataset(ds, p);
  return p;
}

}  // namespace

TEST_CASE("missing dataset key exits 2 naming the key") {
  const auto dir = testing::temp_dir("cli_missing");
  write_text(dir / "c.toml", "horizon = 3\n");
  const auto r = run_cli("forecast -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("'dataset'") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit 2") {
  const auto dir = testing::temp_dir("cli_usage");
  CHECK(run_cli("forecast -c " + quoted(dir / "none.toml"), dir).code == 2);
  CHECK(run_cli("plot", dir).code == 2);
  CHECK(run_cli("", dir).code == 2);
  write_text(dir / "c.toml", "dataset = \"x.csv\"\nbogus = 1\n");
  const auto r = run_cli("forecast -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("'bogus'") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("markov_bin forecast on the bundled sample matches the golden file") {
  const auto dir = testing::temp_dir("cli_golden");
  const auto r = run_cli("forecast -c " + quoted(source("tests/golden/forecast_periodic.toml")) + " -o " +
                             quoted(dir / "out"),
                         dir);
  REQUIRE(r.code == 0);
  CHECK(read_text(dir / "out" / "predictions.csv") == read_text(source("tests/golden/forecast_periodic_predictions.csv")));
  const auto resolved = json::parse(read_text(dir / "out" / "resolved_config.json"));
  CHECK(resolved["command"] == "forecast");
  CHECK(resolved["config"]["seed"] == 7);
  CHECK(json::parse(read_text(dir / "out" / "distributions.json")).is_object());
  fs::remove_all(dir);
}

TEST_CASE("same config and seed give byte-identical outputs") {
  const auto dir = testing::temp_dir("cli_repro");
  write_text(dir / "c.toml", "dataset = \"data/periodic_sample.csv\"\nmethod = \"dicl_s\"\nbackend = \"gaussian_context\"\n"
                             "sampling = \"sample\"\ncontext_length = 60\nhorizon = 10\n");
  for (const char* o : {"a", "b"})
    REQUIRE(run_cli("forecast -c " + quoted(dir / "c.toml") + " --seed 5 -o " + quoted(dir / o), dir).code == 0);
  for (const char* f : {"predictions.csv", "distributions.json"}) CHECK(read_text(dir / "a" / f) == read_text(dir / "b" / f));
  // The resolved configs differ only in the output directory.
  auto ra = json::parse(read_text(dir / "a" / "resolved_config.json"));
  auto rb = json::parse(read_text(dir / "b" / "resolved_config.json"));
  ra["config"].erase("output_dir");
  rb["config"].erase("output_dir");
  CHECK(ra == rb);
  REQUIRE(run_cli("forecast -c " + quoted(dir / "c.toml") + " --seed 6 -o " + quoted(dir / "c"), dir).code == 0);
  CHECK(read_text(dir / "a" / "predictions.csv") != read_text(dir / "c" / "predictions.csv"));
  fs::remove_all(dir);
}

TEST_CASE("perfect-prediction fixture gives zero MSE") {
  const auto dir = testing::temp_dir("cli_perfect");
  const auto ds = dicl::trajdata::load_dataset(source("data/periodic_sample.csv"), dicl::trajdata::FileFormat::Csv);
  const auto& states = ds.trajectories.front().states;
  // Windows of context 40 and horizon 10 with stride 50: starts 0 and 50.
  std::ostringstream preds;
  preds.precision(17);
  preds << "rollout,step,dim,value\n";
  for (int w = 0; w < 2; ++w)
    for (int h = 1; h <= 10; ++h)
      for (Eigen::Index d = 0; d < states.cols(); ++d) preds << w << ',' << h << ',' << d << ',' << states(50 * w + 40 + h - 1, d) << '\n';
  write_text(dir / "preds.csv", preds.str());
  write_text(dir / "c.toml", "dataset = \"data/periodic_sample.csv\"\ncontext_length = 40\nhorizon = 10\nn_rollouts = 2\n"
                             "horizons = [1, 5, 10]\ncalibration = false\npredictions = \"" +
                                 (dir / "preds.csv").string() + "\"\n");
  REQUIRE(run_cli("metrics -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir).code == 0);
  std::istringstream mse(read_text(dir / "out" / "mse.csv"));
  std::string line;
  std::getline(mse, line);
  int rows = 0;
  while (std::getline(mse, line)) {
    ++rows;
    const std::string value = line.substr(line.rfind(',') + 1);
    CHECK(std::stod(value) == 0.0);
  }
  CHECK(rows > 0);
  fs::remove_all(dir);
}

TEST_CASE("simulated-truth calibration lies within the binomial band") {
  const auto dir = testing::temp_dir("cli_calib");
  const auto data = iid_dataset(dir);
  write_text(dir / "c.toml", "dataset = \"" + data.string() + "\"\nbackend = \"gaussian_context\"\ncontext_length = 50\n"
                             "horizon = 1\nhorizons = [1]\nn_rollouts = 1\ncalibration_burn_in = 100\n");
  REQUIRE(run_cli("metrics -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir).code == 0);
  const auto ks = json::parse(read_text(dir / "out" / "ks.json"));
  const double n = ks["n"].get<double>();
  CHECK(n == 2 * 2 * (1500 - 101));
  std::istringstream rel(read_text(dir / "out" / "reliability.csv"));
  std::string line;
  std::getline(rel, line);
  while (std::getline(rel, line)) {
    const double p = std::stod(line.substr(0, line.find(',')));
    const double f = std::stod(line.substr(line.find(',') + 1));
    CHECK(std::abs(f - p) <= 3.0 * std::sqrt(p * (1.0 - p) / n));
  }
  fs::remove_all(dir);
}

TEST_CASE("empty dataset exits 2") {
  const auto dir = testing::temp_dir("cli_empty");
  write_text(dir / "e.csv", "s0,episode\n");
  write_text(dir / "e.manifest.json", R"({"state_cols": ["s0"], "action_cols": [], "episode_col": "episode"})");
  write_text(dir / "c.toml", "dataset = \"" + (dir / "e.csv").string() + "\"\ncontext_length = 4\n");
  CHECK(run_cli("metrics -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("boundcheck: malformed gamma exits 2, a p = 0 cell sits at zero") {
  const auto dir = testing::temp_dir("cli_bound");
  write_text(dir / "bad.toml", "gamma = 1.0\n");
  const auto bad = run_cli("boundcheck -c " + quoted(dir / "bad.toml") + " -o " + quoted(dir / "bad"), dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("'gamma'") != std::string::npos);

  write_text(dir / "c.toml", "n_pairs = 2\np_values = [0.0]\nk_values = [3]\nT_values = [0]\nn_rollouts = 20000\n");
  REQUIRE(run_cli("boundcheck -c " + quoted(dir / "c.toml") + " -o " + quoted(dir / "out"), dir).code == 0);
  const auto rep = json::parse(read_text(dir / "out" / "bound_report.json"));
  CHECK(rep["all_hold"] == true);
  CHECK(rep["lemma_all_hold"] == true);
  REQUIRE(rep["cells"].size() == 2);
  for (const auto& cell : rep["cells"])
    CHECK(cell["lhs"].get<double>() <= 3.0 * cell["stderr"].get<double>() + 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("train: smoke run and the alpha 0 ablation") {
  const auto dir = testing::temp_dir("cli_train");
  const std::string common = "total_timesteps = 500\nlearning_starts = 100\nupdate_frequency = 100\nbatch_size = 32\n"
                             "llm_learning_starts = 200\nllm_learning_frequency = 50\nmax_context_length = 20\n";
  write_text(dir / "smoke.toml", common + "llm_alpha = 0.1\n");
  write_text(dir / "zero.toml", common + "llm_alpha = 0.0\n");
  write_text(dir / "sac.toml", common + "algorithm = \"sac\"\n");
  REQUIRE(run_cli("train -c " + quoted(dir / "smoke.toml") + " -o " + quoted(dir / "smoke"), dir).code == 0);
  std::istringstream log(read_text(dir / "smoke" / "training_log.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 500);
  CHECK(fs::exists(dir / "smoke" / "checkpoints" / "final.json"));

  REQUIRE(run_cli("train -c " + quoted(dir / "zero.toml") + " --seed 3 -o " + quoted(dir / "zero"), dir).code == 0);
  REQUIRE(run_cli("train -c " + quoted(dir / "sac.toml") + " --seed 3 -o " + quoted(dir / "sac"), dir).code == 0);
  CHECK(read_text(dir / "zero" / "training_log.csv") == read_text(dir / "sac" / "training_log.csv"));
  CHECK(read_text(dir / "zero" / "checkpoints" / "final.json") == read_text(dir / "sac" / "checkpoints" / "final.json"));
  fs::remove_all(dir);
}

TEST_CASE("policyeval and sensitivity write their tables") {
  const auto dir = testing::temp_dir("cli_misc");
  write_text(dir / "p.toml", "dataset = \"data/periodic_sample.csv\"\ncontexts = [48]\nhorizons = [0, 12]\n"
                             "episode_length = 120\n");
  REQUIRE(run_cli("policyeval -c " + quoted(dir / "p.toml") + " -o " + quoted(dir / "p"), dir).code == 0);
  const auto csv = read_text(dir / "p" / "policyeval.csv");
  CHECK(csv.find("0,48,0,") != std::string::npos);
  CHECK(csv.find("0,48,12,") != std::string::npos);
  write_text(dir / "s.toml", "n_samples = 20\n");
  REQUIRE(run_cli("sensitivity -c " + quoted(dir / "s.toml") + " -o " + quoted(dir / "s"), dir).code == 0);
  CHECK(read_text(dir / "s" / "sensitivity.csv").find("theta_dot,torque,") != std::string::npos);
  fs::remove_all(dir);
}
