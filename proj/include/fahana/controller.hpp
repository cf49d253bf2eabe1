#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fahana/errors.hpp"
#include "fahana/random.hpp"
#include "fahana/search_space.hpp"

namespace fahana {

// =========================================================================
// Recurrent sampling policy
//
// A single gated recurrent cell unrolled for 5 decisions per block. Each
// decision kind (skip?, type, kernel, ch2, ch3) owns one softmax head and
// one action-embedding table, shared across block positions. The input at
// a step is the embedding of the previous step's action; a learned start
// token feeds the first step. Training is plain score-function gradient
// ascent with a moving-average baseline; the backward pass below is
// derived by hand against the exact forward recurrences.
// =========================================================================

struct ControllerHyperparams {
  int hidden_dim = 64;
  int embedding_dim = 32;
  double learning_rate = 5e-3;
  double discount = 0.99;        // per-step credit decay inside an episode
  double baseline_decay = 0.95;  // moving-average weight on the old baseline
  int batch_size = 5;
  double temperature = 1.0;
};

inline void validate_hyperparams(const ControllerHyperparams& h) {
  if (h.hidden_dim < 1 || h.embedding_dim < 1)
    throw ValidationError("hidden_dim and embedding_dim must be >= 1");
  if (h.learning_rate < 0.0) throw ValidationError("learning_rate must be >= 0");
  if (!(h.discount >= 0.0 && h.discount <= 1.0))
    throw ValidationError("discount must lie in [0, 1]");
  if (!(h.baseline_decay >= 0.0 && h.baseline_decay <= 1.0))
    throw ValidationError("baseline_decay must lie in [0, 1]");
  if (h.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(h.temperature > 0.0)) throw ValidationError("temperature must be > 0");
}

struct GateWeights {
  Eigen::MatrixXd in;    // hidden x embedding
  Eigen::MatrixXd rec;   // hidden x hidden
  Eigen::VectorXd bias;  // hidden
};

struct ControllerParams {
  Eigen::VectorXd start_token;
  GateWeights update, reset, candidate;
  std::vector<Eigen::MatrixXd> head_weight;  // per kind: arity x hidden
  std::vector<Eigen::VectorXd> head_bias;    // per kind: arity
  std::vector<Eigen::MatrixXd> embedding;    // per kind: arity x embedding

  // Visits every tensor in a fixed order; serialization, initialization,
  // and the finite-difference harness all rely on that order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("start_token", start_token);
    f("update_in", update.in);
    f("update_rec", update.rec);
    f("update_bias", update.bias);
    f("reset_in", reset.in);
    f("reset_rec", reset.rec);
    f("reset_bias", reset.bias);
    f("candidate_in", candidate.in);
    f("candidate_rec", candidate.rec);
    f("candidate_bias", candidate.bias);
    for (std::size_t k = 0; k < head_weight.size(); ++k) {
      f(("head_weight_" + std::to_string(k)).c_str(), head_weight[k]);
      f(("head_bias_" + std::to_string(k)).c_str(), head_bias[k]);
    }
    for (std::size_t k = 0; k < embedding.size(); ++k)
      f(("embedding_" + std::to_string(k)).c_str(), embedding[k]);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ControllerParams*>(this)->for_each_tensor(
        [&](const char* name, auto& m) { f(name, std::as_const(m)); });
  }

  void set_zero() {
    for_each_tensor([](const char*, auto& m) { m.setZero(); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const char*, const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  // this += scale * other (same shapes assumed)
  void axpy(double scale, const ControllerParams& other) {
    std::vector<const Eigen::MatrixXd*> mats;
    std::vector<const Eigen::VectorXd*> vecs;
    other.for_each_tensor([&](const char*, const auto& m) {
      using M = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<M, Eigen::MatrixXd>)
        mats.push_back(&m);
      else
        vecs.push_back(&m);
    });
    std::size_t mi = 0, vi = 0;
    for_each_tensor([&](const char*, auto& m) {
      using M = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<M, Eigen::MatrixXd>)
        m += scale * *mats[mi++];
      else
        m += scale * *vecs[vi++];
    });
  }
};

struct ControllerState {
  ControllerHyperparams hyper;
  std::vector<int> arities;  // one entry per decision kind
  ControllerParams params;
  double baseline = 0.0;
};

inline constexpr double kInitRange = 0.08;

inline ControllerState controller_init(const SearchSpaceConfig& cfg,
                                       const ControllerHyperparams& hyper, std::uint64_t seed) {
  validate_config(cfg);
  validate_hyperparams(hyper);
  ControllerState state;
  state.hyper = hyper;
  state.arities = decision_arities(cfg);
  const int h = hyper.hidden_dim, e = hyper.embedding_dim;
  ControllerParams& p = state.params;
  p.start_token.resize(e);
  for (GateWeights* g : {&p.update, &p.reset, &p.candidate}) {
    g->in.resize(h, e);
    g->rec.resize(h, h);
    g->bias.resize(h);
  }
  for (int arity : state.arities) {
    p.head_weight.emplace_back(arity, h);
    p.head_bias.emplace_back(arity);
    p.embedding.emplace_back(arity, e);
  }
  std::mt19937_64 rng(seed);
  p.for_each_tensor([&](const char*, auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = uniform_range(rng, -kInitRange, kInitRange);
  });
  return state;
}

// -------------------------------------------------------------------------
// Forward pass
// -------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepTrace {
  Eigen::VectorXd x, h_prev, z, r, c, h;
  Eigen::VectorXd probs;
  int kind = 0;
  int action = 0;
  bool forced = false;    // value dictated by an earlier skip decision
  double logprob = 0.0;
};

// One cell step plus the head distribution for `kind`. The caller fills
// in the action afterwards.
inline StepTrace cell_step(const ControllerParams& p, Eigen::VectorXd h_prev, Eigen::VectorXd x,
                           int kind, double temperature) {
  StepTrace s;
  s.kind = kind;
  s.x = std::move(x);
  s.h_prev = std::move(h_prev);
  s.z = (p.update.in * s.x + p.update.rec * s.h_prev + p.update.bias)
            .unaryExpr([](double v) { return sigmoid(v); });
  s.r = (p.reset.in * s.x + p.reset.rec * s.h_prev + p.reset.bias)
            .unaryExpr([](double v) { return sigmoid(v); });
  s.c = (p.candidate.in * s.x + p.candidate.rec * s.h_prev.cwiseProduct(s.r) + p.candidate.bias)
            .array()
            .tanh()
            .matrix();
  s.h = (Eigen::VectorXd::Ones(s.z.size()) - s.z).cwiseProduct(s.c) +
        s.z.cwiseProduct(s.h_prev);

  Eigen::VectorXd scaled = (p.head_weight[kind] * s.h + p.head_bias[kind]) / temperature;
  const double mx = scaled.maxCoeff();
  const double lse = mx + std::log((scaled.array() - mx).exp().sum());
  s.probs = (scaled.array() - lse).exp();
  return s;
}

inline Eigen::VectorXd input_for_step(const ControllerParams& p, int t,
                                      const std::vector<int>& actions) {
  if (t == 0) return p.start_token;
  const int prev_kind = (t - 1) % kDecisionsPerBlock;
  return p.embedding[prev_kind].row(actions[t - 1]).transpose();
}

inline void check_batch_actions(const ControllerState& state,
                                const std::vector<int>& actions) {
  if (actions.empty() || actions.size() % kDecisionsPerBlock != 0)
    throw MalformedActions("episode action count must be a positive multiple of " +
                           std::to_string(kDecisionsPerBlock));
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int arity = state.arities[t % kDecisionsPerBlock];
    if (actions[t] < 0 || actions[t] >= arity)
      throw MalformedActions("action " + std::to_string(t) + " out of range");
  }
}

// A block whose skip decision chose "skip" has its four follower
// decisions forced.
inline bool step_is_forced(const std::vector<int>& actions, const std::vector<int>& arities,
                           std::size_t t) {
  const int kind = static_cast<int>(t % kDecisionsPerBlock);
  if (kind == 0) return false;
  const std::size_t block_start = t - static_cast<std::size_t>(kind);
  return arities[0] > 1 && actions[block_start] == 0;
}

// Teacher-forced replay of a recorded action sequence.
inline std::vector<StepTrace> unroll(const ControllerState& state,
                                     const std::vector<int>& actions) {
  check_batch_actions(state, actions);
  std::vector<StepTrace> steps;
  steps.reserve(actions.size());
  Eigen::VectorXd h = Eigen::VectorXd::Zero(state.hyper.hidden_dim);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int kind = static_cast<int>(t % kDecisionsPerBlock);
    StepTrace s = cell_step(state.params, std::move(h), input_for_step(state.params, t, actions),
                            kind, state.hyper.temperature);
    s.action = actions[t];
    s.forced = step_is_forced(actions, state.arities, t);
    s.logprob = s.forced ? 0.0 : std::log(s.probs[s.action]);
    h = s.h;
    steps.push_back(std::move(s));
  }
  return steps;
}

}  // namespace detail

// -------------------------------------------------------------------------
// Sampling
// -------------------------------------------------------------------------

struct SampledEpisode {
  std::vector<int> actions;
  std::vector<double> step_logprobs;
  double total_logprob = 0.0;
  ArchitectureSpec architecture;
};

struct EpisodeRecord {
  std::vector<int> actions;
  std::vector<double> step_logprobs;
  double reward = 0.0;
  bool feasible = false;
};

inline constexpr int kMaxSampleAttempts = 100;

// Draws one architecture. Deterministic decisions (single-option heads
// and the followers of a chosen skip) consume no randomness and carry
// zero log-probability. The all-skip outcome is invalid and is redrawn,
// up to kMaxSampleAttempts times.
inline SampledEpisode sample(const ControllerState& state, const SearchSpaceConfig& cfg,
                             std::mt19937_64& rng) {
  validate_config(cfg);
  if (decision_arities(cfg) != state.arities)
    throw ValidationError("controller was built for a different search space");
  const int total_steps = cfg.num_searchable_blocks * kDecisionsPerBlock;

  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    SampledEpisode ep;
    ep.actions.reserve(total_steps);
    ep.step_logprobs.reserve(total_steps);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(state.hyper.hidden_dim);
    bool block_skipped = false;
    for (int t = 0; t < total_steps; ++t) {
      const int kind = t % kDecisionsPerBlock;
      detail::StepTrace s =
          detail::cell_step(state.params, std::move(h),
                            detail::input_for_step(state.params, t, ep.actions), kind,
                            state.hyper.temperature);
      h = std::move(s.h);
      const int arity = state.arities[kind];
      int action = 0;
      double logprob = 0.0;
      const bool forced = kind != 0 && block_skipped;
      if (!forced && arity > 1) {
        std::vector<double> probs(s.probs.data(), s.probs.data() + arity);
        action = categorical(rng, probs);
        logprob = std::log(s.probs[action]);
      }
      if (kind == 0) block_skipped = (arity > 1 && action == 0);
      ep.actions.push_back(action);
      ep.step_logprobs.push_back(logprob);
      ep.total_logprob += logprob;
    }
    ArchitectureSpec arch = decode(ep.actions, cfg);
    if (!validate(arch, cfg)) continue;  // the all-skip draw
    ep.architecture = std::move(arch);
    return ep;
  }
  throw DegenerateSampling("exceeded " + std::to_string(kMaxSampleAttempts) +
                           " attempts without a valid architecture");
}

// -------------------------------------------------------------------------
// Gradient
//
// Objective estimate over a batch of m recorded episodes:
//   (1/m) sum_k sum_t discount^(T-t) log pi(a_t) (R_k - baseline)
// The gradient below is its exact derivative; the baseline is the one
// stored in `state` (updated only afterwards, in controller_update).
// -------------------------------------------------------------------------

namespace detail {

inline void check_batch(const ControllerState& state, const std::vector<EpisodeRecord>& batch) {
  if (static_cast<int>(batch.size()) != state.hyper.batch_size)
    throw BatchSizeMismatch("expected " + std::to_string(state.hyper.batch_size) +
                            " episodes, got " + std::to_string(batch.size()));
  for (const EpisodeRecord& ep : batch) {
    check_batch_actions(state, ep.actions);
    if (ep.actions.size() != batch.front().actions.size())
      throw MalformedActions("episodes in a batch must have equal length");
  }
}

}  // namespace detail

inline double policy_objective(const ControllerState& state,
                               const std::vector<EpisodeRecord>& batch) {
  detail::check_batch(state, batch);
  double total = 0.0;
  for (const EpisodeRecord& ep : batch) {
    const std::vector<detail::StepTrace> steps = detail::unroll(state, ep.actions);
    const std::size_t T = steps.size();
    const double advantage = ep.reward - state.baseline;
    for (std::size_t t = 0; t < T; ++t) {
      if (steps[t].forced) continue;
      const double credit = std::pow(state.hyper.discount, static_cast<double>(T - 1 - t));
      total += credit * steps[t].logprob * advantage;
    }
  }
  return total / static_cast<double>(batch.size());
}

inline ControllerParams policy_gradient(const ControllerState& state,
                                        const std::vector<EpisodeRecord>& batch) {
  detail::check_batch(state, batch);
  const ControllerParams& p = state.params;
  ControllerParams grad = p;
  grad.set_zero();
  const double tau = state.hyper.temperature;

  for (const EpisodeRecord& ep : batch) {
    const std::vector<detail::StepTrace> steps = detail::unroll(state, ep.actions);
    const std::size_t T = steps.size();
    const double scale = (ep.reward - state.baseline) / static_cast<double>(batch.size());

    Eigen::VectorXd dh = Eigen::VectorXd::Zero(state.hyper.hidden_dim);
    for (std::size_t ti = T; ti-- > 0;) {
      const detail::StepTrace& s = steps[ti];

      // Head: d/dlogits of log softmax(logits/tau)[a] is (onehot - p)/tau.
      if (!s.forced) {
        const double credit =
            scale * std::pow(state.hyper.discount, static_cast<double>(T - 1 - ti));
        Eigen::VectorXd dlogits = -s.probs;
        dlogits[s.action] += 1.0;
        dlogits *= credit / tau;
        grad.head_weight[s.kind].noalias() += dlogits * s.h.transpose();
        grad.head_bias[s.kind] += dlogits;
        dh.noalias() += p.head_weight[s.kind].transpose() * dlogits;
      }

      // Cell: h = (1-z) .* c + z .* h_prev
      const Eigen::VectorXd dc =
          dh.cwiseProduct(Eigen::VectorXd::Ones(dh.size()) - s.z);
      const Eigen::VectorXd dz = dh.cwiseProduct(s.h_prev - s.c);
      Eigen::VectorXd dh_prev = dh.cwiseProduct(s.z);

      const Eigen::VectorXd dac =
          dc.cwiseProduct((1.0 - s.c.array().square()).matrix());
      grad.candidate.in.noalias() += dac * s.x.transpose();
      grad.candidate.rec.noalias() += dac * s.h_prev.cwiseProduct(s.r).transpose();
      grad.candidate.bias += dac;
      Eigen::VectorXd dx = p.candidate.in.transpose() * dac;
      const Eigen::VectorXd drh = p.candidate.rec.transpose() * dac;
      const Eigen::VectorXd dr = drh.cwiseProduct(s.h_prev);
      dh_prev += drh.cwiseProduct(s.r);

      const Eigen::VectorXd daz =
          dz.cwiseProduct(s.z.cwiseProduct(Eigen::VectorXd::Ones(s.z.size()) - s.z));
      grad.update.in.noalias() += daz * s.x.transpose();
      grad.update.rec.noalias() += daz * s.h_prev.transpose();
      grad.update.bias += daz;
      dx.noalias() += p.update.in.transpose() * daz;
      dh_prev.noalias() += p.update.rec.transpose() * daz;

      const Eigen::VectorXd dar =
          dr.cwiseProduct(s.r.cwiseProduct(Eigen::VectorXd::Ones(s.r.size()) - s.r));
      grad.reset.in.noalias() += dar * s.x.transpose();
      grad.reset.rec.noalias() += dar * s.h_prev.transpose();
      grad.reset.bias += dar;
      dx.noalias() += p.reset.in.transpose() * dar;
      dh_prev.noalias() += p.reset.rec.transpose() * dar;

      if (ti == 0) {
        grad.start_token += dx;
      } else {
        const int prev_kind = static_cast<int>((ti - 1) % kDecisionsPerBlock);
        grad.embedding[prev_kind].row(ep.actions[ti - 1]) += dx.transpose();
      }
      dh = std::move(dh_prev);
    }
  }
  return grad;
}

// Applies one gradient-ascent step, then refreshes the reward baseline
// from the batch mean. The gradient is taken against the old baseline.
inline ControllerState controller_update(const ControllerState& state,
                                         const std::vector<EpisodeRecord>& batch) {
  ControllerParams grad = policy_gradient(state, batch);
  if (!grad.all_finite()) throw NonFiniteGradient("gradient has non-finite components");
  ControllerState next = state;
  next.params.axpy(state.hyper.learning_rate, grad);
  if (!next.params.all_finite())
    throw NonFiniteGradient("parameters became non-finite after the update");
  double mean_reward = 0.0;
  for (const EpisodeRecord& ep : batch) mean_reward += ep.reward;
  mean_reward /= static_cast<double>(batch.size());
  next.baseline = state.hyper.baseline_decay * state.baseline +
                  (1.0 - state.hyper.baseline_decay) * mean_reward;
  return next;
}

// Total log-probability of a full action sequence under the current
// parameters (forced steps contribute zero).
inline double episode_logprob(const ControllerState& state, const std::vector<int>& actions) {
  double total = 0.0;
  for (const detail::StepTrace& s : detail::unroll(state, actions)) total += s.logprob;
  return total;
}

// -------------------------------------------------------------------------
// Checkpointing
// -------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const ControllerState& state) {
  nlohmann::json tensors = nlohmann::json::object();
  state.params.for_each_tensor([&](const char* name, const auto& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  });
  return nlohmann::json{{"format_version", kCheckpointVersion},
                        {"hyper",
                         {{"hidden_dim", state.hyper.hidden_dim},
                          {"embedding_dim", state.hyper.embedding_dim},
                          {"learning_rate", state.hyper.learning_rate},
                          {"discount", state.hyper.discount},
                          {"baseline_decay", state.hyper.baseline_decay},
                          {"batch_size", state.hyper.batch_size},
                          {"temperature", state.hyper.temperature}}},
                        {"arities", state.arities},
                        {"baseline", state.baseline},
                        {"tensors", tensors}};
}

inline ControllerState controller_from_json(const nlohmann::json& j) {
  detail::require_fields(j, {"format_version", "hyper", "arities", "baseline", "tensors"}, {},
                         "controller checkpoint");
  if (detail::get_field<int>(j, "format_version", "controller checkpoint") != kCheckpointVersion)
    throw ParseError("controller checkpoint: unsupported format version");
  const nlohmann::json& jh = j.at("hyper");
  detail::require_fields(jh,
                         {"hidden_dim", "embedding_dim", "learning_rate", "discount",
                          "baseline_decay", "batch_size", "temperature"},
                         {}, "controller hyperparams");
  ControllerState state;
  state.hyper.hidden_dim = detail::get_field<int>(jh, "hidden_dim", "hyper");
  state.hyper.embedding_dim = detail::get_field<int>(jh, "embedding_dim", "hyper");
  state.hyper.learning_rate = detail::get_field<double>(jh, "learning_rate", "hyper");
  state.hyper.discount = detail::get_field<double>(jh, "discount", "hyper");
  state.hyper.baseline_decay = detail::get_field<double>(jh, "baseline_decay", "hyper");
  state.hyper.batch_size = detail::get_field<int>(jh, "batch_size", "hyper");
  state.hyper.temperature = detail::get_field<double>(jh, "temperature", "hyper");
  validate_hyperparams(state.hyper);
  state.arities = detail::get_field<std::vector<int>>(j, "arities", "controller checkpoint");
  if (state.arities.size() != kDecisionsPerBlock)
    throw ParseError("controller checkpoint: expected one arity per decision kind");
  for (int arity : state.arities)
    if (arity < 1) throw ParseError("controller checkpoint: arities must be >= 1");
  state.baseline = detail::get_field<double>(j, "baseline", "controller checkpoint");

  const int h = state.hyper.hidden_dim, e = state.hyper.embedding_dim;
  ControllerParams& p = state.params;
  p.start_token.resize(e);
  for (GateWeights* g : {&p.update, &p.reset, &p.candidate}) {
    g->in.resize(h, e);
    g->rec.resize(h, h);
    g->bias.resize(h);
  }
  for (int arity : state.arities) {
    p.head_weight.emplace_back(arity, h);
    p.head_bias.emplace_back(arity);
    p.embedding.emplace_back(arity, e);
  }
  const nlohmann::json& jt = j.at("tensors");
  p.for_each_tensor([&](const char* name, auto& m) {
    if (!jt.contains(name))
      throw ParseError(std::string("controller checkpoint: missing tensor ") + name);
    const nlohmann::json& t = jt.at(name);
    if (detail::get_field<Eigen::Index>(t, "rows", name) != m.rows() ||
        detail::get_field<Eigen::Index>(t, "cols", name) != m.cols())
      throw ParseError(std::string("controller checkpoint: bad shape for ") + name);
    const std::vector<double> data = detail::get_field<std::vector<double>>(t, "data", name);
    if (static_cast<Eigen::Index>(data.size()) != m.size())
      throw ParseError(std::string("controller checkpoint: bad data size for ") + name);
    std::copy(data.begin(), data.end(), m.data());
  });
  return state;
}

}  // namespace fahana
