#include <seqprior/agent.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include <seqprior/eval.hpp>

namespace seqprior {

PriorKind prior_kind(Variant v) {
  switch (v) {
    case Variant::kSac: return PriorKind::kUniform;
    case Variant::kMiracle: return PriorKind::kGaussian;
    case Variant::kLzSac: return PriorKind::kLz;
    case Variant::kSpac: return PriorKind::kTransformer;
  }
  return PriorKind::kUniform;
}

double complexity_cost(Variant v, double logpi, double prior_term) {
  // the uniform prior's -D log 2 is a constant and drops out of SAC
  if (v == Variant::kSac) return logpi;
  return logpi - prior_term;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which), 0x5eedu};
  return std::mt19937_64(seq);
}

TransformerConfig transformer_config(const TrainConfig& c, int action_dim) {
  TransformerConfig t;
  t.action_dim = action_dim;
  t.width = c.tf_width;
  t.heads = c.tf_heads;
  t.layers = c.tf_layers;
  t.max_context = c.tf_max_context;
  t.dropout = c.tf_dropout;
  return t;
}

Matrix append_row(const Matrix& m, const Eigen::RowVectorXd& row) {
  Matrix out(m.rows() + 1, row.size());
  if (m.rows() > 0) out.topRows(m.rows()) = m;
  out.row(m.rows()) = row;
  return out;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

struct RngState {
  static std::string dump(const std::mt19937_64& r) {
    std::ostringstream os;
    os << r;
    return os.str();
  }
  static void restore(std::mt19937_64& r, const std::string& s) {
    std::istringstream is(s);
    is >> r;
  }
};

}  // namespace

Agent::Agent(const TrainConfig& cfg, int obs_dim, int action_dim)
    : cfg_(cfg), obs_dim_(obs_dim), action_dim_(action_dim) {
  validate(cfg_);
  auto init = stream(cfg.seed, 1);
  const int h = cfg.hidden;
  actor = Mlp({obs_dim, h, h, 2 * action_dim}, init, "");
  q1 = Mlp({obs_dim + action_dim, h, h, 1}, init, "");
  q2 = Mlp({obs_dim + action_dim, h, h, 1}, init, "");
  q1_target = q1;
  q2_target = q2;
  gaussian = GaussianPrior(action_dim);
  // separate stream so the actor/critic draws do not depend on the variant
  auto prior_init = stream(cfg.seed, 2);
  transformer = Transformer(transformer_config(cfg, action_dim), prior_init);
  update_rng = stream(cfg.seed, 3);
  batch_rng = stream(cfg.seed, 4);
  tau_rng = stream(cfg.seed, 5);
  dropout_rng = stream(cfg.seed, 6);
}

LzParams Agent::lz() const { return {cfg_.lz_window, cfg_.lz_buffer, cfg_.lz_min_match}; }

Vector Agent::act(const Vector& state, bool deterministic, std::mt19937_64& rng) {
  ad::Tape tape;
  ad::Var s = tape.constant(Matrix(state.transpose()));
  auto head = make_head(mlp_forward(tape, actor, s, false), action_dim_);
  auto draw = sample_squashed(head, deterministic, rng);
  return draw.action.value().row(0).transpose();
}

Matrix Agent::sample_actions(const Vector& state, int n, std::mt19937_64& rng) {
  ad::Tape tape;
  Matrix states = state.transpose().replicate(n, 1);
  auto head = make_head(mlp_forward(tape, actor, tape.constant(std::move(states)), false), action_dim_);
  return sample_squashed(head, false, rng).action.value();
}

ad::Var Agent::prior_term(ad::Tape& tape, const std::vector<Matrix>& contexts, ad::Var actions,
                          ad::Var pre_tanh) {
  const Eigen::Index n = actions.rows();
  switch (cfg_.variant) {
    case Variant::kSac:
      return tape.constant(Matrix::Zero(n, 1));
    case Variant::kMiracle:
      return gaussian_prior_logprob(tape, gaussian, pre_tanh, false);
    case Variant::kSpac:
      if (contexts.size() != static_cast<std::size_t>(n))
        throw PreconditionError("SPAC complexity cost needs one context per action");
      return transformer_logprob(tape, transformer, contexts, pre_tanh, false);
    case Variant::kLzSac: {
      if (contexts.size() != static_cast<std::size_t>(n))
        throw PreconditionError("LZ-SAC complexity cost needs one context per action");
      // delta is piecewise constant in the action: no gradient
      Matrix d(n, 1);
      const auto params = lz();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (contexts[static_cast<std::size_t>(i)].rows() == 0)
          throw PreconditionError("LZ-SAC complexity cost needs a non-empty context");
        d(i, 0) = delta(contexts[static_cast<std::size_t>(i)], actions.value().row(i).transpose(),
                        cfg_.granularity, params);
      }
      return tape.constant(std::move(d));
    }
  }
  throw PreconditionError("unknown variant");
}

Vector Agent::q_target(const Batch& batch) {
  ad::Tape tape;
  ad::Var s1 = tape.constant(batch.next_states);
  auto head = make_head(mlp_forward(tape, actor, s1, false), action_dim_);
  auto next = sample_squashed(head, false, update_rng);
  ad::Var in = ad::concat_cols(s1, next.action);
  ad::Var q = ad::min(mlp_forward(tape, q1_target, in, false), mlp_forward(tape, q2_target, in, false));

  std::vector<Matrix> contexts;
  if (cfg_.variant == Variant::kSpac || cfg_.variant == Variant::kLzSac) {
    contexts.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
      contexts.push_back(append_row(batch.windows[i], batch.actions.row(static_cast<Eigen::Index>(i))));
  }
  ad::Var prior = prior_term(tape, contexts, next.action, next.pre_tanh);
  const Vector soft = (q.value() - cfg_.alpha * (next.logprob.value() - prior.value())).col(0);
  const Vector bootstrap = (1.0 - batch.terminals.array()).matrix();
  return batch.rewards + cfg_.gamma * bootstrap.cwiseProduct(soft);
}

ad::Var Agent::critic_loss(ad::Tape& tape, const Batch& batch, const Vector& y) {
  ad::Var in = tape.constant((Matrix(batch.states.rows(), obs_dim_ + action_dim_) << batch.states, batch.actions).finished());
  ad::Var target = tape.constant(Matrix(y));
  ad::Var l1 = ad::mean(ad::square(ad::sub(mlp_forward(tape, q1, in, true), target)));
  ad::Var l2 = ad::mean(ad::square(ad::sub(mlp_forward(tape, q2, in, true), target)));
  return ad::add(l1, l2);
}

double Agent::critic_update(const Batch& batch) {
  const Vector y = q_target(batch);
  ad::Tape tape;
  ad::Var loss = critic_loss(tape, batch, y);
  check_finite(loss.scalar(), "critic loss");
  q1.store.zero_grad();
  q2.store.zero_grad();
  tape.backward(loss);
  AdamConfig opt;
  opt.lr = cfg_.lr_critic;
  adam_step(q1.store, opt);
  adam_step(q2.store, opt);
  soft_update(q1_target.store, q1.store, cfg_.rho);
  soft_update(q2_target.store, q2.store, cfg_.rho);
  return loss.scalar();
}

ad::Var Agent::actor_loss(ad::Tape& tape, const Batch& batch, std::mt19937_64& rng) {
  ad::Var s = tape.constant(batch.states);
  auto head = make_head(mlp_forward(tape, actor, s, true), action_dim_);
  auto draw = sample_squashed(head, false, rng);
  ad::Var in = ad::concat_cols(s, draw.action);
  ad::Var q = ad::min(mlp_forward(tape, q1, in, false), mlp_forward(tape, q2, in, false));
  ad::Var prior = prior_term(tape, batch.windows, draw.action, draw.pre_tanh);
  ad::Var cost = ad::sub(draw.logprob, prior);
  last_logpi_ = draw.logprob.value().mean();
  last_prior_ = prior.value().mean();
  last_q_ = q.value().mean();
  return ad::mean(ad::sub(ad::scale(cost, cfg_.alpha), q));
}

double Agent::actor_update(const Batch& batch) {
  ad::Tape tape;
  ad::Var loss = actor_loss(tape, batch, update_rng);
  check_finite(loss.scalar(), "actor loss");
  actor.store.zero_grad();
  tape.backward(loss);
  AdamConfig opt;
  opt.lr = cfg_.lr_actor;
  adam_step(actor.store, opt);
  return loss.scalar();
}

ad::Var Agent::prior_loss(ad::Tape& tape, const Batch& batch, std::mt19937_64* dropout, std::size_t* targets) {
  if (targets) *targets = 0;
  if (cfg_.variant == Variant::kMiracle) {
    ad::Var u = tape.constant(safe_atanh(batch.actions));
    if (targets) *targets = batch.size();
    return ad::scale(ad::mean(gaussian_prior_logprob(tape, gaussian, u, true)), -1.0);
  }
  if (cfg_.variant != Variant::kSpac) return tape.constant(0.0);

  // next-action likelihood at every position of window ++ a_t
  const int max_ctx = transformer.cfg.max_context;
  std::vector<Matrix> inputs;
  std::vector<Matrix> seqs;
  std::vector<bool> skip_first;
  inputs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Matrix seq = append_row(batch.windows[i], batch.actions.row(static_cast<Eigen::Index>(i)));
    bool pad = batch.window_padded[i];
    if (seq.rows() > max_ctx + 1) {
      seq = Matrix(seq.bottomRows(max_ctx + 1));
      pad = false;
    }
    inputs.push_back(seq.topRows(seq.rows() - 1));
    seqs.push_back(std::move(seq));
    skip_first.push_back(pad);
  }
  auto out = transformer_forward(tape, transformer, inputs, true, dropout);
  std::vector<int> rows;
  std::vector<Eigen::RowVectorXd> chosen;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = seqs[b];
    for (Eigen::Index j = skip_first[b] ? 1 : 0; j < seq.rows(); ++j) {
      rows.push_back(static_cast<int>(b * out.seq_len + j));
      chosen.push_back(seq.row(j));
    }
  }
  if (rows.empty()) return tape.constant(0.0);
  Matrix target(static_cast<Eigen::Index>(rows.size()), action_dim_);
  for (std::size_t k = 0; k < chosen.size(); ++k) target.row(static_cast<Eigen::Index>(k)) = chosen[k];
  ad::Var u = tape.constant(safe_atanh(target));
  ad::Var mean = ad::gather_rows(out.head.mean, rows);
  ad::Var log_std = ad::gather_rows(out.head.log_std, rows);
  ad::Var logp = ad::sub(ad::gaussian_logprob(u, mean, log_std), ad::tanh_log_det(u));
  if (targets) *targets = rows.size();
  return ad::scale(ad::mean(logp), -1.0);
}

double Agent::prior_update(const Batch& batch) {
  if (cfg_.variant == Variant::kSac || cfg_.variant == Variant::kLzSac) {
    if (!warned_noop_) {
      std::cerr << "warning: prior_update is a no-op for " << to_string(cfg_.variant) << "\n";
      warned_noop_ = true;
    }
    return 0.0;
  }
  ad::Tape tape;
  std::size_t n_targets = 0;
  ad::Var loss = prior_loss(tape, batch, &dropout_rng, &n_targets);
  if (n_targets == 0) return 0.0;
  check_finite(loss.scalar(), "prior loss");
  ParamStore& store = cfg_.variant == Variant::kMiracle ? gaussian.store : transformer.store;
  store.zero_grad();
  tape.backward(loss);
  AdamConfig opt;
  if (cfg_.variant == Variant::kMiracle) {
    opt.lr = cfg_.lr_prior;
  } else {
    opt.lr = warmup_linear_decay(cfg_.tf_lr, tokens_seen, cfg_.tf_warmup_tokens, total_tokens);
    tokens_seen += static_cast<double>(n_targets);
  }
  adam_step(store, opt);
  return loss.scalar();
}

void Agent::update(const ReplayBuffer& buffer, std::int64_t step, int episode_steps, UpdateStats& st) {
  const bool do_critic = step % cfg_.critic_update_every == 0;
  const bool do_actor = step % cfg_.actor_update_every == 0;
  const bool do_prior = step % cfg_.prior_update_every == 0 &&
                        (cfg_.variant == Variant::kMiracle || cfg_.variant == Variant::kSpac);
  if (!do_critic && !do_actor && !do_prior) return;
  std::uniform_int_distribution<int> tau(cfg_.tau_min, cfg_.resolved_tau_max(episode_steps));
  const int t = tau(tau_rng);
  Batch batch;
  try {
    batch = buffer.sample_batch(cfg_.batch_size, t, t, batch_rng);
  } catch (const RetryableError&) {
    return;
  }
  if (do_critic) {
    st.critic_loss += critic_update(batch);
    ++st.critic_updates;
  }
  if (do_actor) {
    st.actor_loss += actor_update(batch);
    st.logpi += last_logpi_;
    st.prior_term += last_prior_;
    st.q += last_q_;
    ++st.actor_updates;
  }
  if (do_prior) {
    st.prior_loss += prior_update(batch);
    ++st.prior_updates;
  }
}

void Agent::save(Checkpoint& ck) const {
  ck.meta["config"] = serialize_config(cfg_);
  ck.meta["obs_dim"] = std::to_string(obs_dim_);
  ck.meta["action_dim"] = std::to_string(action_dim_);
  ck.meta["rng.update"] = RngState::dump(update_rng);
  ck.meta["rng.batch"] = RngState::dump(batch_rng);
  ck.meta["rng.tau"] = RngState::dump(tau_rng);
  ck.meta["rng.dropout"] = RngState::dump(dropout_rng);
  std::ostringstream tok;
  tok.precision(17);
  tok << tokens_seen << " " << total_tokens;
  ck.meta["tokens"] = tok.str();
  append_store(ck, "actor/", actor.store, true);
  append_store(ck, "q1/", q1.store, true);
  append_store(ck, "q2/", q2.store, true);
  append_store(ck, "q1_target/", q1_target.store);
  append_store(ck, "q2_target/", q2_target.store);
  append_store(ck, "gaussian/", gaussian.store, true);
  append_store(ck, "transformer/", transformer.store, true);
}

void Agent::load(const Checkpoint& ck) {
  // periodic snapshots carry only the policy and priors, without optimizer state
  const bool opt = ck.find("actor/l0.w#m") != nullptr;
  load_store(ck, "actor/", actor.store, opt);
  load_store(ck, "gaussian/", gaussian.store, opt);
  load_store(ck, "transformer/", transformer.store, opt);
  if (ck.find("q1/l0.w") != nullptr) {
    load_store(ck, "q1/", q1.store, opt);
    load_store(ck, "q2/", q2.store, opt);
    load_store(ck, "q1_target/", q1_target.store);
    load_store(ck, "q2_target/", q2_target.store);
  }
  auto restore = [&](std::mt19937_64& r, const std::string& k) {
    auto it = ck.meta.find(k);
    if (it != ck.meta.end()) RngState::restore(r, it->second);
  };
  restore(update_rng, "rng.update");
  restore(batch_rng, "rng.batch");
  restore(tau_rng, "rng.tau");
  restore(dropout_rng, "rng.dropout");
  if (auto it = ck.meta.find("tokens"); it != ck.meta.end()) {
    std::istringstream tok(it->second);
    tok >> tokens_seen >> total_tokens;
  }
}

Agent load_agent(const std::filesystem::path& checkpoint) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  auto meta = [&](const std::string& k) {
    auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw CorruptionError(checkpoint.string() + " lacks '" + k + "'");
    return it->second;
  };
  const TrainConfig cfg = parse_config(meta("config"));
  Agent agent(cfg, std::stoi(meta("obs_dim")), std::stoi(meta("action_dim")));
  agent.load(ck);
  return agent;
}

// ---------------------------------------------------------------------------

Episode rollout(Env& env, std::uint64_t seed, const std::function<Vector(const Vector&)>& policy) {
  Episode ep;
  const auto& spec = env.spec();
  std::vector<Vector> s, a;
  std::vector<double> r;
  Vector obs = env.reset(seed);
  for (;;) {
    Vector act = policy(obs);
    auto res = env.step(act);
    s.push_back(obs);
    a.push_back(act);
    r.push_back(res.reward);
    obs = std::move(res.observation);
    if (res.done) break;
  }
  ep.states.resize(static_cast<Eigen::Index>(s.size()), spec.obs_dim);
  ep.actions.resize(static_cast<Eigen::Index>(a.size()), spec.action_dim);
  ep.rewards.resize(static_cast<Eigen::Index>(r.size()));
  for (std::size_t t = 0; t < s.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    ep.states.row(i) = s[t].transpose();
    ep.actions.row(i) = a[t].transpose();
    ep.rewards(i) = r[t];
  }
  ep.ret = ep.rewards.sum();
  return ep;
}

std::uint64_t eval_episode_seed(std::uint64_t run_seed, int episode) {
  return run_seed * 0x9E3779B97F4A7C15ull + 0xE7A1ull + static_cast<std::uint64_t>(episode);
}

EvalRecord evaluate_agent(Agent& agent, Env& env, const TrainConfig& cfg, std::vector<Episode>* out) {
  EvalRecord rec;
  std::vector<double> returns, lengths;
  std::vector<Matrix> actions;
  std::mt19937_64 unused(0);
  const LzParams lz{cfg.lz_window, cfg.lz_buffer, cfg.lz_min_match};
  Eigen::Index total_rows = 0;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    Episode ep = rollout(env, eval_episode_seed(cfg.seed, e),
                         [&](const Vector& s) { return agent.act(s, true, unused); });
    returns.push_back(ep.ret);
    lengths.push_back(static_cast<double>(encoded_length(ep.actions, cfg.granularity, lz)));
    total_rows += ep.actions.rows();
    actions.push_back(ep.actions);
    if (out) out->push_back(std::move(ep));
  }
  Matrix pooled(total_rows, env.spec().action_dim);
  Eigen::Index r = 0;
  for (const auto& a : actions) {
    pooled.middleRows(r, a.rows()) = a;
    r += a.rows();
  }
  double sum = 0.0;
  for (double v : returns) sum += v;
  rec.return_mean = sum / static_cast<double>(returns.size());
  double ss = 0.0;
  for (double v : returns) ss += (v - rec.return_mean) * (v - rec.return_mean);
  rec.return_std = returns.size() > 1 ? std::sqrt(ss / static_cast<double>(returns.size() - 1)) : 0.0;
  rec.return_p20 = percentile(returns, 20.0);
  rec.return_p80 = percentile(returns, 80.0);
  double lsum = 0.0;
  for (double v : lengths) lsum += v;
  rec.encoded_length = lsum / static_cast<double>(lengths.size());
  rec.action_entropy = action_entropy(pooled);
  return rec;
}

std::string metrics_json(const EvalRecord& r) {
  auto avg = [](double total, int n) { return n > 0 ? nlohmann::json(total / n) : nlohmann::json(nullptr); };
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["return_mean"] = r.return_mean;
  j["return_p20"] = r.return_p20;
  j["return_p80"] = r.return_p80;
  j["return_std"] = r.return_std;
  j["encoded_length"] = r.encoded_length;
  j["action_entropy_bits"] = r.action_entropy;
  j["critic_loss"] = avg(r.train.critic_loss, r.train.critic_updates);
  j["actor_loss"] = avg(r.train.actor_loss, r.train.actor_updates);
  j["logpi"] = avg(r.train.logpi, r.train.actor_updates);
  j["q"] = avg(r.train.q, r.train.actor_updates);
  j["prior_term"] = avg(r.train.prior_term, r.train.actor_updates);
  j["prior_loss"] = avg(r.train.prior_loss, r.train.prior_updates);
  j["critic_updates"] = r.train.critic_updates;
  j["actor_updates"] = r.train.actor_updates;
  j["prior_updates"] = r.train.prior_updates;
  return j.dump();
}

std::filesystem::path make_run_dir(const TrainConfig& cfg, const std::string& timestamp) {
  return std::filesystem::path(cfg.output_dir) / cfg.env / to_string(cfg.variant) /
         ("seed" + std::to_string(cfg.seed)) / timestamp;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

struct LoopState {
  std::int64_t step = 0;
  std::int64_t next_episode = 0;
  std::mt19937_64 env_rng;
  std::mt19937_64 act_rng;
};

void save_resume(const std::filesystem::path& dir, const Agent& agent, const ReplayBuffer& buffer,
                 const LoopState& ls) {
  Checkpoint ck;
  agent.save(ck);
  ck.meta["step"] = std::to_string(ls.step);
  ck.meta["next_episode"] = std::to_string(ls.next_episode);
  ck.meta["rng.env"] = RngState::dump(ls.env_rng);
  ck.meta["rng.act"] = RngState::dump(ls.act_rng);
  buffer.save(dir / "replay.bin");
  write_checkpoint(dir / "resume.bin", ck);
}

// Periodic snapshots keep the policy and priors; critics live in resume/final.
void write_snapshot(const std::filesystem::path& dir, const Agent& agent, const TrainConfig& cfg,
                    const EnvSpec& spec, std::int64_t step, bool uniform_behaviour) {
  Checkpoint ck;
  ck.meta["config"] = serialize_config(cfg);
  ck.meta["obs_dim"] = std::to_string(spec.obs_dim);
  ck.meta["action_dim"] = std::to_string(spec.action_dim);
  ck.meta["step"] = std::to_string(step);
  if (uniform_behaviour) ck.meta[kBehaviourKey] = "uniform";
  agent.save(ck);
  std::vector<std::pair<std::string, Matrix>> slim;
  for (auto& a : ck.arrays)
    if (a.first.find('#') == std::string::npos && a.first.rfind("q", 0) != 0) slim.push_back(a);
  write_checkpoint(dir / ("ckpt_" + std::to_string(step) + ".bin"), Checkpoint{ck.meta, std::move(slim)});
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const std::filesystem::path& run_dir, bool resume,
                      std::int64_t pause_at) {
  validate(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  auto env = make_env(cfg.env, cfg.action_repeat);
  auto eval_env = env->clone();
  const EnvSpec spec = env->spec();
  const int episode_steps = spec.episode_length;

  Agent agent(cfg, spec.obs_dim, spec.action_dim);
  {
    const double mean_window = 0.5 * (cfg.tau_min + cfg.resolved_tau_max(episode_steps)) + 1.0;
    const double updates = std::max<double>(1.0, static_cast<double>(cfg.steps - cfg.seed_steps) / cfg.prior_update_every);
    agent.total_tokens = updates * cfg.batch_size * mean_window;
  }
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));
  LoopState ls;
  ls.env_rng = std::mt19937_64(cfg.seed ^ 0xE17Eull);
  ls.act_rng = std::mt19937_64(cfg.seed ^ 0xAC7ull);

  TrainResult result;
  result.run_dir = run_dir;
  const fs::path metrics_path = run_dir / "metrics.jsonl";
  if (resume && fs::exists(run_dir / "resume.bin")) {
    const Checkpoint ck = read_checkpoint(run_dir / "resume.bin");
    const TrainConfig stored = parse_config(ck.meta.at("config"));
    if (!(stored == cfg)) throw ConfigError("resume: config differs from the stored run config");
    agent.load(ck);
    buffer = ReplayBuffer::load(run_dir / "replay.bin");
    ls.step = std::stoll(ck.meta.at("step"));
    ls.next_episode = std::stoll(ck.meta.at("next_episode"));
    RngState::restore(ls.env_rng, ck.meta.at("rng.env"));
    RngState::restore(ls.act_rng, ck.meta.at("rng.act"));
    // keep only metrics recorded up to the resume point
    std::vector<std::string> kept;
    std::ifstream is(metrics_path);
    for (std::string line; std::getline(is, line);) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      if (j.at("step").get<std::int64_t>() <= ls.step) kept.push_back(line);
    }
    std::string text;
    for (const auto& l : kept) text += l + "\n";
    write_text(metrics_path, text);
  } else {
    write_text(run_dir / "config.json", serialize_config(cfg));
    write_text(metrics_path, "");
    fs::remove(run_dir / "DONE");
    // step 0: the agent acts uniformly at random until the seed phase ends
    write_snapshot(run_dir, agent, cfg, spec, 0, true);
    seed_fill(buffer, *env, static_cast<int>(std::min<std::int64_t>(cfg.seed_steps, cfg.steps)), ls.env_rng,
              ls.next_episode);
    ls.step = std::min<std::int64_t>(cfg.seed_steps, cfg.steps);
    save_resume(run_dir, agent, buffer, ls);
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  UpdateStats stats;
  auto evaluate_and_log = [&](std::int64_t step) {
    EvalRecord rec = evaluate_agent(agent, *eval_env, cfg);
    rec.step = step;
    rec.train = stats;
    stats = UpdateStats{};
    metrics << metrics_json(rec) << "\n";
    metrics.flush();
    write_snapshot(run_dir, agent, cfg, spec, step, false);
    result.evals.push_back(rec);
  };

  Vector obs;
  std::int64_t episode = -1, t_in_episode = 0;
  auto new_episode = [&] {
    episode = ls.next_episode++;
    t_in_episode = 0;
    obs = env->reset(ls.env_rng());
  };
  new_episode();

  try {
    while (ls.step < cfg.steps) {
      Vector a = agent.act(obs, false, ls.act_rng);
      auto res = env->step(a);
      buffer.push({obs, a, res.reward, res.observation, res.done, episode, t_in_episode});
      ++t_in_episode;
      obs = std::move(res.observation);
      ++ls.step;
      agent.update(buffer, ls.step, episode_steps, stats);
      if (ls.step % cfg.eval_interval == 0 || ls.step == cfg.steps) {
        evaluate_and_log(ls.step);
        if (res.done) {
          save_resume(run_dir, agent, buffer, ls);
          if (pause_at > 0 && ls.step >= pause_at && ls.step < cfg.steps) return result;
        }
      }
      if (res.done) new_episode();
    }
  } catch (const std::exception& e) {
    // the latest consistent resume point stays on disk
    std::cerr << "training aborted at step " << ls.step << ": " << e.what() << "\n";
    throw;
  }

  Checkpoint final_ck;
  final_ck.meta["step"] = std::to_string(ls.step);
  agent.save(final_ck);
  write_checkpoint(run_dir / "final.bin", final_ck);
  save_resume(run_dir, agent, buffer, ls);
  write_text(run_dir / "DONE", "steps " + std::to_string(ls.step) + "\n");
  result.complete = true;
  return result;
}

}  // namespace seqprior
