#include "dicl/app/commands.hpp"

#include "dicl/boundlab.hpp"
#include "dicl/envs.hpp"
#include "dicl/forecaster.hpp"
#include "dicl/metrics.hpp"
#include "dicl/policyeval.hpp"
#include "dicl/predictor.hpp"
#include "dicl/rl/trainer.hpp"
#include "dicl/trajdata.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace dicl::app {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// schemas

KeySpec opt(std::string key, ValueType t, json fallback, std::vector<std::string> choices = {}) {
  return {std::move(key), t, false, std::move(fallback), std::move(choices)};
}
KeySpec req(std::string key, ValueType t) { return {std::move(key), t, true, json(), {}}; }

void append(Schema& s, const Schema& more) { s.insert(s.end(), more.begin(), more.end()); }

Schema common_keys() {
  return {opt("seed", ValueType::Int, 0), opt("output_dir", ValueType::String, "out"), opt("jobs", ValueType::Int, 1)};
}

Schema data_keys() {
  return {req("dataset", ValueType::String), opt("format", ValueType::String, json(), {"csv", "jsonl"}),
          opt("manifest", ValueType::String, json())};
}

Schema method_keys() {
  return {opt("method", ValueType::String, "vicl", {"vicl", "dicl_s", "dicl_sa"}),
          opt("include_reward", ValueType::Bool, false),
          opt("n_components", ValueType::Int, 0),
          opt("sampling", ValueType::String, "mode", {"mean", "mode", "sample"}),
          opt("digits", ValueType::Int, 3),
          opt("pad_fraction", ValueType::Double, 0.15),
          opt("standardize", ValueType::Bool, true),
          opt("lower_quantile", ValueType::Double, 0.05),
          opt("upper_quantile", ValueType::Double, 0.95),
          opt("interval_samples", ValueType::Int, 256)};
}

Schema backend_keys() {
  return {opt("backend", ValueType::String, "markov_bin", {"markov_bin", "gaussian_context", "llm_http"}),
          opt("backend_url", ValueType::String, ""),
          opt("timeout_ms", ValueType::Int, 30000),
          opt("max_attempts", ValueType::Int, 3),
          opt("max_concurrency", ValueType::Int, 4),
          opt("temperature", ValueType::Double, 1.0),
          opt("markov_smoothing", ValueType::Double, 0.0),
          opt("markov_min_count", ValueType::Int, 1),
          opt("gaussian_window", ValueType::Int, 0)};
}

const std::map<std::string, Schema>& schemas() {
  static const std::map<std::string, Schema> all = [] {
    std::map<std::string, Schema> m;

    Schema forecast = common_keys();
    append(forecast, data_keys());
    append(forecast, method_keys());
    append(forecast, backend_keys());
    append(forecast, {opt("episode", ValueType::Int, 0), opt("context_start", ValueType::Int, 0),
                      opt("context_length", ValueType::Int, 0), opt("horizon", ValueType::Int, 20),
                      opt("include_probs", ValueType::Bool, true)});
    m["forecast"] = forecast;

    Schema metrics = common_keys();
    append(metrics, data_keys());
    append(metrics, method_keys());
    append(metrics, backend_keys());
    append(metrics, {req("context_length", ValueType::Int), opt("horizon", ValueType::Int, 20),
                     opt("horizons", ValueType::IntList, json::array({1, 5, 10, 20})),
                     opt("n_rollouts", ValueType::Int, 10), opt("stride", ValueType::Int, 0),
                     opt("predictions", ValueType::String, json()), opt("calibration", ValueType::Bool, true),
                     opt("calibration_burn_in", ValueType::Int, 10)});
    m["metrics"] = metrics;

    Schema bound = common_keys();
    append(bound, {opt("n_states", ValueType::Int, 4), opt("n_actions", ValueType::Int, 2),
                   opt("gamma", ValueType::Double, 0.9), opt("r_max", ValueType::Double, 1.0),
                   opt("n_pairs", ValueType::Int, 50), opt("p_values", ValueType::DoubleList, json::array({0.1, 0.5})),
                   opt("k_values", ValueType::IntList, json::array({1, 3})),
                   opt("T_values", ValueType::IntList, json::array({0, 2})),
                   opt("n_rollouts", ValueType::Int, 200000), opt("horizon", ValueType::Int, 0),
                   opt("lemma_t_max", ValueType::Int, 30)});
    m["boundcheck"] = bound;

    Schema train = common_keys();
    append(train, backend_keys());
    append(train, {opt("env", ValueType::String, "pendulum", {"pendulum"}),
                   opt("algorithm", ValueType::String, "dicl_sac", {"dicl_sac", "sac"}),
                   opt("llm_alpha", ValueType::Double, 0.05), opt("batch_size", ValueType::Int, 64),
                   opt("update_frequency", ValueType::Int, 200), opt("gradient_steps", ValueType::Int, 0),
                   opt("learning_starts", ValueType::Int, 1000), opt("llm_learning_starts", ValueType::Int, 2000),
                   opt("llm_learning_frequency", ValueType::Int, 16), opt("min_context_length", ValueType::Int, 1),
                   opt("max_context_length", ValueType::Int, 198), opt("total_timesteps", ValueType::Int, 10000),
                   opt("gamma", ValueType::Double, 0.99), opt("policy_lr", ValueType::Double, 3e-4),
                   opt("q_lr", ValueType::Double, 1e-3), opt("tau", ValueType::Double, 0.005),
                   opt("policy_frequency", ValueType::Int, 2), opt("buffer_size", ValueType::Int, 1000000),
                   opt("llm_dynamics_learner", ValueType::String, "vicl", {"vicl", "dicl_s"}),
                   opt("llm_sampling_method", ValueType::String, "mode", {"mean", "mode", "sample"}),
                   opt("digits", ValueType::Int, 3), opt("pad_fraction", ValueType::Double, 0.15)});
    m["train"] = train;

    Schema peval = common_keys();
    append(peval, data_keys());
    append(peval, method_keys());
    append(peval, backend_keys());
    append(peval, {opt("contexts", ValueType::IntList, json::array({500})),
                   opt("horizons", ValueType::IntList, json::array({0, 100, 500})),
                   opt("episode_length", ValueType::Int, 1000),
                   opt("discount", ValueType::String, "undiscounted", {"undiscounted", "gamma"}),
                   opt("gamma", ValueType::Double, 0.99)});
    m["policyeval"] = peval;

    Schema sens = common_keys();
    append(sens, {opt("env", ValueType::String, "pendulum", {"pendulum"}), opt("n_samples", ValueType::Int, 100),
                  opt("perturbation", ValueType::Double, 0.1)});
    m["sensitivity"] = sens;
    return m;
  }();
  return all;
}

// ---------------------------------------------------------------------------
// helpers

int geti(const json& c, const char* k) { return c.at(k).get<int>(); }
double getd(const json& c, const char* k) { return c.at(k).get<double>(); }
std::string gets(const json& c, const char* k) { return c.at(k).get<std::string>(); }

void need(bool cond, const std::string& msg) {
  if (!cond) fail(ErrorKind::Config, msg);
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
  out << content;
  if (!out) fail(ErrorKind::Io, "failed writing " + p.string());
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

trajdata::Dataset load_data(const json& c) {
  const fs::path path = gets(c, "dataset");
  trajdata::FileFormat format = path.extension() == ".jsonl" ? trajdata::FileFormat::Jsonl : trajdata::FileFormat::Csv;
  if (c.contains("format")) format = gets(c, "format") == "jsonl" ? trajdata::FileFormat::Jsonl : trajdata::FileFormat::Csv;
  std::optional<fs::path> manifest;
  if (c.contains("manifest")) manifest = fs::path(gets(c, "manifest"));
  auto ds = trajdata::load_dataset(path, format, manifest);
  if (ds.trajectories.empty()) fail(ErrorKind::Schema, "dataset " + path.string() + " holds no trajectories");
  return ds;
}

tokenizer::NumericEncoding encoding_from(const json& c) {
  tokenizer::NumericEncoding enc;
  enc.digits = geti(c, "digits");
  enc.pad_fraction = getd(c, "pad_fraction");
  try {
    enc.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  return enc;
}

predict::DiclMethod method_from(const json& c) {
  predict::DiclMethod m;
  m.kind = predict::method_kind_from_string(gets(c, "method"));
  m.include_reward = c.at("include_reward").get<bool>();
  m.n_components = geti(c, "n_components");
  m.sampling = predict::sampling_from_string(gets(c, "sampling"));
  m.encoding = encoding_from(c);
  m.standardize = c.at("standardize").get<bool>();
  m.lower_quantile = getd(c, "lower_quantile");
  m.upper_quantile = getd(c, "upper_quantile");
  need(geti(c, "interval_samples") >= 1, "key 'interval_samples' must be >= 1");
  m.interval_samples = static_cast<std::size_t>(geti(c, "interval_samples"));
  m.seed = c.at("seed").get<std::uint64_t>();
  m.jobs = geti(c, "jobs");
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  return m;
}

std::shared_ptr<const forecast::ForecastBackend> backend_from(const json& c) {
  forecast::ForecastBackendSpec spec;
  spec.kind = forecast::backend_kind_from_string(gets(c, "backend"));
  spec.url = gets(c, "backend_url");
  need(geti(c, "timeout_ms") > 0, "key 'timeout_ms' must be positive");
  spec.timeout = std::chrono::milliseconds(geti(c, "timeout_ms"));
  spec.max_attempts = geti(c, "max_attempts");
  spec.max_concurrency = geti(c, "max_concurrency");
  spec.temperature = getd(c, "temperature");
  need(geti(c, "gaussian_window") >= 0, "key 'gaussian_window' must be >= 0");
  spec.window = static_cast<std::size_t>(geti(c, "gaussian_window"));
  spec.smoothing = getd(c, "markov_smoothing");
  need(geti(c, "markov_min_count") >= 1, "key 'markov_min_count' must be >= 1");
  spec.min_count = static_cast<std::size_t>(geti(c, "markov_min_count"));
  if (spec.kind == forecast::BackendKind::LlmHttp) need(!spec.url.empty(), "backend llm_http needs 'backend_url'");
  try {
    return forecast::make_backend(spec);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
}

std::vector<std::string> feature_names(const predict::FeatureLayout& l) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < l.states; ++i) names.push_back("s" + std::to_string(i));
  for (Eigen::Index i = 0; i < l.actions; ++i) names.push_back("a" + std::to_string(i));
  if (l.reward) names.push_back("r");
  return names;
}

std::vector<int> int_list(const json& c, const char* k) { return c.at(k).get<std::vector<int>>(); }
std::vector<double> double_list(const json& c, const char* k) { return c.at(k).get<std::vector<double>>(); }

// ---------------------------------------------------------------------------
// forecast

void cmd_forecast(const json& c, const fs::path& out, std::ostream& log) {
  const auto ds = load_data(c);
  const auto method = method_from(c);
  const auto backend = backend_from(c);
  const int episode = geti(c, "episode");
  need(episode >= 0 && static_cast<std::size_t>(episode) < ds.trajectories.size(),
       "key 'episode' is out of range (dataset has " + std::to_string(ds.trajectories.size()) + " episodes)");
  const auto& traj = ds.trajectories[static_cast<std::size_t>(episode)];
  const int start = geti(c, "context_start");
  int length = geti(c, "context_length");
  const int horizon = geti(c, "horizon");
  need(horizon >= 1, "key 'horizon' must be >= 1");
  need(start >= 0 && start < traj.length(), "key 'context_start' is out of range");
  if (length == 0) length = static_cast<int>(traj.length()) - start;
  need(length >= 2 && start + length <= traj.length(), "key 'context_length' does not fit the episode");

  const auto context = traj.slice(start, length);
  const auto steps = predict::rollout(context, horizon, method, *backend);
  const auto names = feature_names(steps.front().layout);

  std::ostringstream csv;
  csv << std::setprecision(12) << "step,feature,point,mean,mode,lower,upper\n";
  for (std::size_t h = 0; h < steps.size(); ++h)
    for (std::size_t f = 0; f < names.size(); ++f) {
      const auto i = static_cast<Eigen::Index>(f);
      const auto& s = steps[h];
      csv << h + 1 << ',' << names[f] << ',' << s.point(i) << ',' << s.mean(i) << ',' << s.mode(i) << ','
          << s.lower(i) << ',' << s.upper(i) << '\n';
    }
  write_file(out / "predictions.csv", csv.str());
  write_file(out / "distributions.json", predict::to_json(steps, c.at("include_probs").get<bool>()));
  log << "forecast: " << steps.size() << " steps x " << names.size() << " features with " << backend->name() << "\n";
}

// ---------------------------------------------------------------------------
// metrics

struct Window {
  std::size_t episode;
  Eigen::Index start;
};

std::map<std::pair<int, int>, std::vector<double>> read_prediction_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::Io, "cannot open predictions file " + p.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, "empty predictions file");
  if (line.find("rollout,step,dim,value") != 0)
    fail(ErrorKind::Parse, "predictions file needs the header rollout,step,dim,value");
  std::map<std::pair<int, int>, std::vector<double>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, d, v;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, d, ',') || !std::getline(ls, v))
      fail(ErrorKind::Parse, "predictions line " + std::to_string(n) + ": expected 4 fields");
    try {
      auto& row = rows[{std::stoi(a), std::stoi(b)}];
      const auto dim = static_cast<std::size_t>(std::stoi(d));
      if (row.size() <= dim) row.resize(dim + 1, std::nan(""));
      row[dim] = std::stod(v);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "predictions line " + std::to_string(n) + ": malformed number");
    }
  }
  return rows;
}

void cmd_metrics(const json& c, const fs::path& out, std::ostream& log) {
  const auto ds = load_data(c);
  const auto method = method_from(c);
  const auto backend = backend_from(c);
  const int context = geti(c, "context_length");
  const int horizon = geti(c, "horizon");
  const auto horizons = int_list(c, "horizons");
  const int n_rollouts = geti(c, "n_rollouts");
  const int stride = geti(c, "stride") > 0 ? geti(c, "stride") : context + horizon;
  need(context >= 2, "key 'context_length' must be >= 2");
  need(horizon >= 1, "key 'horizon' must be >= 1");
  need(n_rollouts >= 1, "key 'n_rollouts' must be >= 1");
  need(!horizons.empty(), "key 'horizons' must not be empty");
  for (int h : horizons) need(h >= 1 && h <= horizon, "every entry of 'horizons' must lie in [1, horizon]");

  std::vector<Window> windows;
  for (std::size_t e = 0; e < ds.trajectories.size() && static_cast<int>(windows.size()) < n_rollouts; ++e)
    for (Eigen::Index s = 0; s + context + horizon <= ds.trajectories[e].length() &&
                             static_cast<int>(windows.size()) < n_rollouts;
         s += stride)
      windows.push_back({e, s});
  need(!windows.empty(), "no episode is long enough for context_length + horizon");

  const auto scaler = trajdata::fit_scaler(ds, trajdata::Block::States);
  std::vector<Eigen::MatrixXd> preds, truths;
  std::optional<std::map<std::pair<int, int>, std::vector<double>>> file;
  if (c.contains("predictions")) file = read_prediction_file(gets(c, "predictions"));
  const auto ds_dim = ds.state_dim();
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& traj = ds.trajectories[windows[w].episode];
    truths.push_back(traj.states.block(windows[w].start + context, 0, horizon, ds_dim));
    Eigen::MatrixXd p(horizon, ds_dim);
    if (file) {
      for (int h = 0; h < horizon; ++h) {
        auto it = file->find({static_cast<int>(w), h + 1});
        if (it == file->end() || static_cast<Eigen::Index>(it->second.size()) != ds_dim)
          fail(ErrorKind::Schema, "predictions file lacks rollout " + std::to_string(w) + " step " + std::to_string(h + 1));
        for (Eigen::Index d = 0; d < ds_dim; ++d) p(h, d) = it->second[static_cast<std::size_t>(d)];
      }
    } else {
      const auto steps = predict::rollout(traj.slice(windows[w].start, context), horizon, method, *backend);
      for (int h = 0; h < horizon; ++h) p.row(h) = steps[static_cast<std::size_t>(h)].state().transpose();
    }
    preds.push_back(std::move(p));
  }
  const auto mse = metrics::multistep_mse(preds, truths, scaler, horizons);
  write_file(out / "mse.csv", mse.to_csv());

  metrics::CalibrationAccumulator acc;
  if (c.at("calibration").get<bool>()) {
    const int burn_in = geti(c, "calibration_burn_in");
    need(burn_in >= 0, "key 'calibration_burn_in' must be >= 0");
    for (const auto& traj : ds.trajectories) {
      const auto n = static_cast<std::size_t>(traj.length());
      if (n < static_cast<std::size_t>(burn_in) + 2) continue;
      std::vector<std::size_t> positions;
      for (std::size_t i = static_cast<std::size_t>(burn_in); i + 1 < n; ++i) positions.push_back(i);
      for (Eigen::Index d = 0; d < ds_dim; ++d) {
        const Eigen::VectorXd col = traj.states.col(d);
        const std::span<const double> view(col.data(), n);
        const auto dists = forecast::icl_forecast(view, method.encoding, *backend, positions);
        for (std::size_t i = 0; i < positions.size(); ++i) acc.add(dists[i], col(static_cast<Eigen::Index>(positions[i] + 1)));
      }
    }
  }
  metrics::CalibrationReport cal;
  if (acc.count() > 0) cal = acc.finish();
  else cal.grid = metrics::default_quantile_grid(), cal.frequencies.assign(cal.grid.size(), 0.0);
  write_file(out / "reliability.csv", cal.to_csv());
  write_file(out / "ks.json", cal.ks_json());
  log << "metrics: " << windows.size() << " rollouts, average mse " << num(mse.average()) << ", ks " << num(cal.ks)
      << " over " << cal.n << " samples\n";
}

// ---------------------------------------------------------------------------
// boundcheck

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::mt19937_64 g(sq);
  return g();
}

void cmd_boundcheck(const json& c, const fs::path& out, std::ostream& log) {
  const int n_states = geti(c, "n_states");
  const int n_actions = geti(c, "n_actions");
  const double gamma = getd(c, "gamma");
  const double r_max = getd(c, "r_max");
  const int n_pairs = geti(c, "n_pairs");
  const auto ps = double_list(c, "p_values");
  const auto ks = int_list(c, "k_values");
  const auto ts = int_list(c, "T_values");
  const int n_rollouts = geti(c, "n_rollouts");
  const int lemma_t = geti(c, "lemma_t_max");
  const auto seed = c.at("seed").get<std::uint64_t>();
  need(n_states >= 1 && n_actions >= 1, "keys 'n_states' and 'n_actions' must be >= 1");
  need(gamma >= 0.0 && gamma < 1.0, "key 'gamma' must lie in [0, 1)");
  need(r_max > 0.0, "key 'r_max' must be positive");
  need(n_pairs >= 1, "key 'n_pairs' must be >= 1");
  need(n_rollouts >= 2, "key 'n_rollouts' must be >= 2");
  need(lemma_t >= 1, "key 'lemma_t_max' must be >= 1");
  need(geti(c, "horizon") >= 0, "key 'horizon' must be >= 0");
  for (double p : ps) need(p >= 0.0 && p <= 1.0, "every entry of 'p_values' must lie in [0, 1]");
  for (int k : ks) need(k >= 0, "every entry of 'k_values' must be >= 0");
  for (int t : ts) need(t >= 0, "every entry of 'T_values' must be >= 0");

  json cells = json::array();
  json lemmas = json::array();
  bool all_hold = true;
  bool lemma_hold = true;
  std::ostringstream table;
  table << std::setw(5) << "pair" << std::setw(6) << "p" << std::setw(4) << "k" << std::setw(4) << "T" << std::setw(13)
        << "lhs" << std::setw(13) << "stderr" << std::setw(13) << "rhs" << std::setw(13) << "slack" << "  holds\n";
  for (int i = 0; i < n_pairs; ++i) {
    const auto pair = boundlab::random_pair(n_states, n_actions, gamma, r_max, mix(seed, 1, static_cast<std::uint64_t>(i)));
    const auto pi = envs::random_policy(n_states, n_actions, mix(seed, 2, static_cast<std::uint64_t>(i)));
    const auto lemma = boundlab::lemma_b2_check(pair, pi, pair.mdp.initial, lemma_t);
    lemma_hold = lemma_hold && lemma.holds;
    lemmas.push_back({{"pair", i}, {"holds", lemma.holds}});
    std::uint64_t cell = 0;
    for (double p : ps)
      for (int k : ks)
        for (int t : ts) {
          boundlab::BranchConfig cfg;
          cfg.p = p;
          cfg.k = k;
          cfg.T = t;
          cfg.horizon = geti(c, "horizon");
          cfg.n_rollouts = static_cast<std::size_t>(n_rollouts);
          cfg.seed = mix(seed, 3 + static_cast<std::uint64_t>(i), cell++);
          cfg.jobs = geti(c, "jobs");
          const auto rep = boundlab::theorem1_check(pair, pi, cfg);
          all_hold = all_hold && rep.holds;
          cells.push_back({{"pair", i}, {"p", p}, {"k", k}, {"T", t}, {"eta", rep.eta}, {"eta_hat", rep.eta_hat},
                           {"stderr", rep.std_error}, {"lhs", rep.lhs}, {"eps_llm", rep.eps}, {"rhs", rep.rhs},
                           {"slack", rep.slack}, {"holds", rep.holds}});
          table << std::setw(5) << i << std::setw(6) << p << std::setw(4) << k << std::setw(4) << t << std::setw(13)
                << num(rep.lhs) << std::setw(13) << num(rep.std_error) << std::setw(13) << num(rep.rhs)
                << std::setw(13) << num(rep.slack) << "  " << (rep.holds ? "yes" : "NO") << "\n";
        }
  }
  json report{{"cells", cells}, {"all_hold", all_hold}, {"lemma", lemmas}, {"lemma_all_hold", lemma_hold},
              {"horizon", c.at("horizon").get<int>() > 0 ? c.at("horizon").get<int>()
                                                          : boundlab::default_horizon(gamma, r_max)}};
  write_file(out / "bound_report.json", report.dump(2));
  log << table.str() << "boundcheck: " << cells.size() << " cells, all hold: " << (all_hold ? "yes" : "no")
      << ", lemma holds: " << (lemma_hold ? "yes" : "no") << "\n";
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const json& c, const fs::path& out, std::ostream& log) {
  rl::DiclSacConfig cfg;
  cfg.llm_alpha = gets(c, "algorithm") == "sac" ? 0.0 : getd(c, "llm_alpha");
  cfg.batch_size = geti(c, "batch_size");
  cfg.update_frequency = geti(c, "update_frequency");
  cfg.gradient_steps = geti(c, "gradient_steps");
  cfg.learning_starts = geti(c, "learning_starts");
  cfg.llm_learning_starts = geti(c, "llm_learning_starts");
  cfg.llm_learning_frequency = geti(c, "llm_learning_frequency");
  cfg.context_min = geti(c, "min_context_length");
  cfg.context_max = geti(c, "max_context_length");
  cfg.total_steps = geti(c, "total_timesteps");
  need(geti(c, "buffer_size") >= 1, "key 'buffer_size' must be >= 1");
  cfg.buffer_size = static_cast<std::size_t>(geti(c, "buffer_size"));
  cfg.sac.gamma = getd(c, "gamma");
  cfg.sac.policy_lr = getd(c, "policy_lr");
  cfg.sac.q_lr = getd(c, "q_lr");
  cfg.sac.tau = getd(c, "tau");
  cfg.sac.policy_frequency = geti(c, "policy_frequency");
  cfg.seed = c.at("seed").get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }

  predict::DiclMethod method;
  method.kind = predict::method_kind_from_string(gets(c, "llm_dynamics_learner"));
  method.sampling = predict::sampling_from_string(gets(c, "llm_sampling_method"));
  method.encoding = encoding_from(c);
  method.seed = cfg.seed;
  method.jobs = geti(c, "jobs");
  std::shared_ptr<const forecast::ForecastBackend> backend;
  if (cfg.generates()) backend = backend_from(c);

  envs::PendulumEnv env;
  const auto res = rl::dicl_sac_train(env, cfg, method, backend.get());
  write_file(out / "training_log.csv", res.to_csv());

  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json ckpt{{"actor", vec(res.actor_parameters)}, {"q1", vec(res.q1_parameters)}, {"q2", vec(res.q2_parameters)},
            {"log_alpha", res.log_alpha}, {"step", cfg.total_steps}};
  fs::create_directories(out / "checkpoints");
  write_file(out / "checkpoints" / "final.json", ckpt.dump());

  json summary{{"episodes", res.episode_returns.size()},
               {"gradient_updates", res.gradient_updates},
               {"generation_rounds", res.generation_rounds},
               {"generation_failures", res.generation_failures},
               {"llm_steps_skipped", res.llm_steps_skipped},
               {"llm_transitions", res.llm_buffer ? res.llm_buffer->inserted() : 0}};
  if (!res.episode_returns.empty()) summary["final_mean_return"] = res.final_mean_return(10);
  write_file(out / "summary.json", summary.dump(2));
  log << "train: " << res.rows.size() << " steps, " << res.episode_returns.size() << " episodes";
  if (!res.episode_returns.empty()) log << ", final 10-episode mean return " << num(res.final_mean_return(10));
  log << "\n";
}

// ---------------------------------------------------------------------------
// policyeval

void cmd_policyeval(const json& c, const fs::path& out, std::ostream& log) {
  const auto ds = load_data(c);
  auto method = method_from(c);
  method.include_reward = true;
  const auto backend = backend_from(c);
  policyeval::HybridEvalSpec spec;
  spec.episode_length = geti(c, "episode_length");
  spec.method = method;
  spec.discount = gets(c, "discount") == "gamma" ? policyeval::Discount::Gamma : policyeval::Discount::Undiscounted;
  spec.gamma = getd(c, "gamma");
  std::vector<Eigen::Index> ts, ks;
  for (int t : int_list(c, "contexts")) ts.push_back(t);
  for (int k : int_list(c, "horizons")) ks.push_back(k);
  need(!ts.empty() && !ks.empty(), "keys 'contexts' and 'horizons' must not be empty");
  std::vector<trajdata::Trajectory> episodes;
  for (const auto& t : ds.trajectories) {
    need(t.rewards.has_value(), "policyeval needs a reward column in the dataset");
    if (t.length() >= spec.episode_length) episodes.push_back(t);
  }
  need(!episodes.empty(), "no episode reaches 'episode_length'");
  const auto rows = policyeval::hybrid_sweep(episodes, ts, ks, spec, *backend, geti(c, "jobs"));
  write_file(out / "policyeval.csv", policyeval::to_csv(rows));
  log << "policyeval: " << rows.size() << " rows over " << episodes.size() << " episodes\n";
}

// ---------------------------------------------------------------------------
// sensitivity

void cmd_sensitivity(const json& c, const fs::path& out, std::ostream& log) {
  const int n = geti(c, "n_samples");
  const double pert = getd(c, "perturbation");
  need(n >= 2, "key 'n_samples' must be >= 2");
  need(pert > 0.0, "key 'perturbation' must be positive");
  envs::PendulumEnv env;
  const auto traj = envs::collect_rollout(env, envs::uniform_random_policy(1, env.action_bound()), n,
                                          c.at("seed").get<std::uint64_t>());
  trajdata::Dataset ds;
  ds.trajectories.push_back(traj);
  const auto scale = metrics::input_scales(ds);
  const auto params = env.params();
  const metrics::StepFunction f = [params](const Eigen::VectorXd& o, const Eigen::VectorXd& a) {
    const Eigen::Vector2d st(std::atan2(o(1), o(0)), o(2));
    const auto next = envs::PendulumEnv::dynamics(params, st, a(0)).first;
    Eigen::VectorXd r(3);
    r << std::cos(next(0)), std::sin(next(0)), next(1);
    return r;
  };
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(3, 4);
  for (int i = 0; i < n; ++i)
    total += metrics::sensitivity_matrix(f, traj.states.row(i).transpose(), traj.actions->row(i).transpose(), scale, pert);
  total /= static_cast<double>(n);
  const char* in_names[] = {"cos_theta", "sin_theta", "theta_dot", "torque"};
  const char* out_names[] = {"cos_theta", "sin_theta", "theta_dot"};
  std::ostringstream csv;
  csv << std::setprecision(12) << "output,input,sensitivity\n";
  for (int r = 0; r < 3; ++r)
    for (int q = 0; q < 4; ++q) csv << out_names[r] << ',' << in_names[q] << ',' << total(r, q) << '\n';
  write_file(out / "sensitivity.csv", csv.str());
  log << "sensitivity: averaged over " << n << " reference points\n";
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Backend:
    case ErrorKind::ContextOverflow: return kExitBackend;
    case ErrorKind::Numerical: return kExitNumerical;
    default: return kExitConfig;
  }
}

std::vector<std::string> command_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : schemas()) names.push_back(k);
  return names;
}

const Schema& command_schema(const std::string& verb) {
  const auto& all = schemas();
  auto it = all.find(verb);
  if (it == all.end()) fail(ErrorKind::Config, "unknown command '" + verb + "'");
  return it->second;
}

fs::path run_command(const std::string& verb, const json& raw_config, const RunOptions& options, std::ostream& log) {
  const Schema& schema = command_schema(verb);
  json raw = raw_config.is_null() ? json::object() : raw_config;
  if (options.seed) raw["seed"] = *options.seed;
  if (options.out_dir) raw["output_dir"] = *options.out_dir;
  if (options.jobs) raw["jobs"] = *options.jobs;
  if (options.backend_url) {
    const bool has = std::any_of(schema.begin(), schema.end(), [](const KeySpec& k) { return k.key == "backend_url"; });
    if (has) raw["backend_url"] = *options.backend_url;
  }
  const json cfg = resolve_config(raw, schema);
  need(cfg.at("seed").get<std::int64_t>() >= 0, "key 'seed' must be >= 0");
  need(cfg.at("jobs").get<int>() >= 1, "key 'jobs' must be >= 1");

  const fs::path out = gets(cfg, "output_dir");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + out.string() + ": " + ec.message());
  write_file(out / "resolved_config.json", json{{"command", verb}, {"config", cfg}}.dump(2) + "\n");

  if (verb == "forecast") cmd_forecast(cfg, out, log);
  else if (verb == "metrics") cmd_metrics(cfg, out, log);
  else if (verb == "boundcheck") cmd_boundcheck(cfg, out, log);
  else if (verb == "train") cmd_train(cfg, out, log);
  else if (verb == "policyeval") cmd_policyeval(cfg, out, log);
  else if (verb == "sensitivity") cmd_sensitivity(cfg, out, log);
  return out;
}

}  // namespace dicl::app
