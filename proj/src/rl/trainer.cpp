#include "dicl/rl/trainer.hpp"

#include "dicl/error.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace dicl::rl {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(sq);
}

enum StreamTag : std::uint32_t { kEnv = 1, kAction = 2, kSample = 3, kSac = 4, kAux = 5, kLlm = 6, kInit = 7 };

struct Episode {
  std::size_t first_insert = 0;  // insertion count of its first transition
  std::size_t length = 0;
};

}  // namespace

int DiclSacConfig::llm_batch_size() const {
  return static_cast<int>(std::ceil(llm_alpha * static_cast<double>(batch_size) - 1e-9));
}

double DiclSacConfig::balancing_coefficient() const {
  return static_cast<double>(llm_batch_size()) / static_cast<double>(batch_size);
}

void DiclSacConfig::validate() const {
  sac.validate();
  require(llm_alpha >= 0.0 && llm_alpha <= 1.0, ErrorKind::Config, "llm_alpha must lie in [0, 1]");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(update_frequency >= 1, ErrorKind::Config, "update_frequency must be >= 1");
  require(gradient_steps >= 0, ErrorKind::Config, "gradient_steps must be >= 0");
  require(learning_starts >= 0 && llm_learning_starts >= 0, ErrorKind::Config, "learning starts must be >= 0");
  require(llm_learning_frequency >= 1, ErrorKind::Config, "llm_learning_frequency must be >= 1");
  require(context_min >= 0 && context_min <= context_max, ErrorKind::Config, "need 0 <= context_min <= context_max");
  require(context_max >= 1, ErrorKind::Config, "context_max must be >= 1");
  require(total_steps >= 1, ErrorKind::Config, "total_steps must be >= 1");
  require(buffer_size >= 1, ErrorKind::Config, "buffer_size must be >= 1");
}

double TrainingResult::final_mean_return(std::size_t n) const {
  require(!episode_returns.empty(), ErrorKind::InvalidArgument, "no completed episodes");
  const std::size_t k = std::min(n, episode_returns.size());
  return std::accumulate(episode_returns.end() - static_cast<std::ptrdiff_t>(k), episode_returns.end(), 0.0) /
         static_cast<double>(k);
}

std::string TrainingResult::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "step,episode_return,qf_loss,actor_loss,alpha,llm_transitions\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : rows) {
    os << r.step << ',';
    opt(r.episode_return);
    os << ',';
    opt(r.qf_loss);
    os << ',';
    opt(r.actor_loss);
    os << ',';
    opt(r.alpha);
    os << ',' << r.llm_transitions << '\n';
  }
  return os.str();
}

TrainingResult dicl_sac_train(envs::Env& env, const DiclSacConfig& cfg, const predict::DiclMethod& method,
                              const forecast::ForecastBackend* backend) {
  cfg.validate();
  const bool generate = cfg.generates();
  if (generate) {
    require(backend != nullptr, ErrorKind::Config, "synthetic generation needs a forecast backend");
    method.validate();
    require(method.kind != predict::MethodKind::DiclSA, ErrorKind::Config,
            "the trainer forecasts states only; use vicl or dicl_s");
    require(!method.include_reward, ErrorKind::Config, "the trainer forecasts states only; disable include_reward");
  }
  const auto ds = env.observation_dim();
  const auto da = env.action_dim();
  const double bound = env.action_bound();

  auto env_rng = stream(cfg.seed, kEnv);
  auto action_rng = stream(cfg.seed, kAction);
  auto sample_rng = stream(cfg.seed, kSample);
  auto sac_rng = stream(cfg.seed, kSac);
  auto aux_rng = stream(cfg.seed, kAux);
  auto llm_rng = stream(cfg.seed, kLlm);
  const auto init_seed = stream(cfg.seed, kInit)();

  SacAgent agent(ds, da, bound, cfg.sac, init_seed);
  const std::size_t capacity = std::min<std::size_t>(cfg.buffer_size, static_cast<std::size_t>(cfg.total_steps));
  ReplayBuffer buffer(capacity, ds, da);
  TrainingResult res;
  if (generate) {
    const long rounds =
        cfg.total_steps > cfg.llm_learning_starts
            ? (cfg.total_steps - 1 - cfg.llm_learning_starts) / cfg.llm_learning_frequency + 1
            : 1;
    const auto per_round = static_cast<std::size_t>(cfg.context_max + 1 - cfg.context_min);
    res.llm_buffer.emplace(std::min(cfg.buffer_size, static_cast<std::size_t>(rounds) * per_round), ds, da);
    res.observations.resize(cfg.total_steps, ds);
    res.aux_actions.resize(cfg.total_steps, da);
  }
  const int llm_b = cfg.llm_batch_size();
  const double coef = cfg.balancing_coefficient();
  const int g_steps = cfg.gradient_steps > 0 ? cfg.gradient_steps : cfg.update_frequency;

  std::vector<Episode> episodes;
  Episode current{0, 0};
  std::uniform_real_distribution<double> uniform_action(-bound, bound);
  VectorXd obs = env.reset(env_rng);
  double ep_return = 0.0;
  std::optional<SacLosses> last_losses;

  auto generate_round = [&](long step) {
    ++res.generation_rounds;
    // Episodes still fully in the buffer with room for a T_max + 1 window.
    const std::size_t oldest = buffer.inserted() > capacity ? buffer.inserted() - capacity : 0;
    const auto window = static_cast<std::size_t>(cfg.context_max) + 1;
    std::vector<std::size_t> eligible;
    for (std::size_t e = 0; e < episodes.size(); ++e)
      if (episodes[e].first_insert >= oldest && episodes[e].length >= window) eligible.push_back(e);
    if (eligible.empty()) {
      ++res.generation_failures;
      return;
    }
    const Episode& ep = episodes[eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(llm_rng)]];
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, ep.length - window)(llm_rng);
    MatrixXd states(static_cast<Eigen::Index>(window), ds);
    std::vector<std::size_t> inserts(window);
    for (std::size_t i = 0; i < window; ++i) {
      inserts[i] = ep.first_insert + start + i;
      states.row(static_cast<Eigen::Index>(i)) = buffer.obs(inserts[i] % capacity).transpose();
    }
    std::vector<predict::ForecastResult> preds;
    try {
      predict::DiclMethod m = method;
      m.seed = method.seed ^ static_cast<std::uint64_t>(step);
      preds = predict::one_step_forecasts(trajdata::make_trajectory(states), m, *backend, true);
    } catch (const Error&) {
      ++res.generation_failures;
      return;
    }
    for (std::size_t i = static_cast<std::size_t>(cfg.context_min); i < window; ++i) {
      const std::size_t slot = inserts[i] % capacity;
      // Insertion count equals the env step, so the aux action is looked up by it.
      const auto t = static_cast<Eigen::Index>(inserts[i]);
      res.llm_buffer->add(buffer.obs(slot), res.aux_actions.row(t).transpose(), buffer.reward(slot), preds[i].state(),
                          buffer.done(slot), LlmReplayBuffer::Audit{inserts[i], inserts[i], i});
    }
  };

  for (long step = 0; step < cfg.total_steps; ++step) {
    VectorXd action(da);
    if (step < cfg.learning_starts) {
      for (Eigen::Index j = 0; j < da; ++j) action(j) = uniform_action(action_rng);
    } else {
      action = agent.act(obs, action_rng);
    }
    if (generate) {
      res.observations.row(step) = obs.transpose();
      res.aux_actions.row(step) = agent.act(obs, aux_rng).transpose();
    }
    const auto out = env.step(action);
    ep_return += out.reward;
    ++current.length;
    buffer.add(obs, action, out.reward, out.observation, out.terminated);

    TrainingLogRow row;
    row.step = step;
    if (out.terminated || static_cast<int>(current.length) >= env.episode_length()) {
      row.episode_return = ep_return;
      res.episode_returns.push_back(ep_return);
      episodes.push_back(current);
      current = Episode{buffer.inserted(), 0};
      ep_return = 0.0;
      obs = env.reset(env_rng);
    } else {
      obs = out.observation;
    }

    if (generate && step >= cfg.llm_learning_starts && step % cfg.llm_learning_frequency == 0) generate_round(step);

    if (step + 1 >= cfg.learning_starts && (step + 1) % cfg.update_frequency == 0) {
      for (int g = 0; g < g_steps; ++g) {
        const Batch batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), sample_rng);
        if (generate && llm_b > 0 && res.llm_buffer->size() > 0) {
          const Batch extra = res.llm_buffer->sample(static_cast<std::size_t>(llm_b), llm_rng);
          last_losses = agent.update(batch, &extra, coef, sac_rng);
        } else {
          if (generate) ++res.llm_steps_skipped;
          last_losses = agent.update(batch, nullptr, 0.0, sac_rng);
        }
        ++res.gradient_updates;
      }
    }
    if (last_losses) {
      row.qf_loss = 0.5 * (last_losses->qf1 + last_losses->qf2);
      row.actor_loss = last_losses->actor;
      row.alpha = last_losses->alpha;
    }
    row.llm_transitions = res.llm_buffer ? res.llm_buffer->inserted() : 0;
    res.rows.push_back(row);
  }
  res.actor_parameters = agent.actor().flat_parameters();
  res.q1_parameters = agent.q1().flat_parameters();
  res.q2_parameters = agent.q2().flat_parameters();
  res.log_alpha = agent.log_alpha();
  return res;
}

TrainingResult sac_train(envs::Env& env, DiclSacConfig cfg) {
  cfg.llm_alpha = 0.0;
  return dicl_sac_train(env, cfg, predict::DiclMethod{}, nullptr);
}

}  // namespace dicl::rl
