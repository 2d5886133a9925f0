#include "selfrank/ppo.hpp"

#include <cmath>

namespace selfrank {

double kl_term(double logp_rl, double logp_sft) {
  if (!std::isfinite(logp_rl) || !std::isfinite(logp_sft)) {
    throw DomainError("log probabilities must be finite");
  }
  return logp_rl - logp_sft;
}

double ppo_objective(const std::vector<double>& rewards, const std::vector<double>& kls,
                     double beta) {
  if (rewards.empty()) throw ValidationError("objective of an empty sample set");
  if (rewards.size() != kls.size()) {
    throw ValidationError("reward and penalty lists differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) total += rewards[i] - beta * kls[i];
  return total / static_cast<double>(rewards.size());
}

StepStats policy_gradient_step(PolicyParams& params, const PolicyParams& snapshot,
                               const RewardFn& reward, const std::vector<PromptItem>& items,
                               const PPOConfig& config, RngStream& rng, double& baseline) {
  if (items.empty()) throw ValidationError("no prompts for the policy-gradient step");
  if (config.rollouts_per_step < 1) throw ValidationError("rollouts_per_step must be positive");
  if (!params.same_shape(snapshot)) {
    throw ValidationError("policy and snapshot have different shapes");
  }
  if (config.beta < 0.0) throw ValidationError("beta must be nonnegative");
  if (!(config.baseline_decay >= 0.0) || config.baseline_decay >= 1.0) {
    throw ValidationError("baseline decay must lie in [0, 1)");
  }

  // Temperature 1 and full nucleus keep the rollouts distributed exactly as
  // the current policy, which the score-function estimator requires.
  DecodeConfig rollout;
  rollout.temperature = 1.0;
  rollout.top_p = 1.0;
  rollout.max_length = config.max_length;
  rollout.n_samples = 1;

  const int n = config.rollouts_per_step;
  const double inv = 1.0 / static_cast<double>(n);
  detail::PolicyGrads grads(params);
  std::vector<double> rewards, kls;
  rewards.reserve(static_cast<std::size_t>(n));
  kls.reserve(static_cast<std::size_t>(n));
  double adjusted_total = 0.0;

  for (int r = 0; r < n; ++r) {
    const PromptItem& item = items[static_cast<std::size_t>(r) % items.size()];
    const std::string answer = sample_answers(params, item.prompt, rollout, rng)[0];

    double logp_rl = 0.0, logp_sft = 0.0;
    if (!answer.empty()) {
      logp_rl = sequence_log_prob(params, item.prompt, answer);
      logp_sft = sequence_log_prob(snapshot, item.prompt, answer);
    }
    const double kl = kl_term(logp_rl, logp_sft);
    const double rew = reward(item.question, answer);
    if (!std::isfinite(rew)) throw NumericError("reward function returned a non-finite value");
    rewards.push_back(rew);
    kls.push_back(kl);

    const double adjusted = rew - config.beta * kl;
    adjusted_total += adjusted;
    double weight = adjusted - baseline;
    if (config.clip_epsilon > 0.0) {
      // With a single update per sampling batch the behavior policy equals
      // the current one, so the importance ratio is identically 1 and can
      // never leave the clipping band; the branch is kept for the flag's
      // sake and for any future multi-epoch reuse of a rollout batch.
      const double ratio = 1.0;
      if ((ratio > 1.0 + config.clip_epsilon && weight > 0.0) ||
          (ratio < 1.0 - config.clip_epsilon && weight < 0.0)) {
        weight = 0.0;
      }
    }

    if (!answer.empty() && weight != 0.0) {
      // Ascend weight * grad log pi(answer | prompt). The accumulator stores
      // gradients of the negative log probability and apply_grads descends,
      // so a positive coefficient here raises the sample's probability.
      std::vector<int> context = encode(params.vocab, item.prompt);
      for (int id : encode(params.vocab, answer)) {
        detail::accumulate_log_prob_grad(params, context, id, weight * inv, grads);
        context.push_back(id);
      }
    }
  }

  for (const double g : grads.token_embedding.v) {
    if (!std::isfinite(g)) throw NumericError("policy gradient is not finite");
  }
  for (const double g : grads.output_bias) {
    if (!std::isfinite(g)) throw NumericError("policy gradient is not finite");
  }

  StepStats stats;
  stats.mean_reward = 0.0;
  stats.mean_kl = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    stats.mean_reward += rewards[i] * inv;
    stats.mean_kl += kls[i] * inv;
  }
  stats.objective = ppo_objective(rewards, kls, config.beta);

  baseline = config.baseline_decay * baseline +
             (1.0 - config.baseline_decay) * (adjusted_total * inv);

  if (config.lr != 0.0) detail::apply_grads(params, grads, config.lr);
  return stats;
}

std::vector<PPOLogEntry> run_ppo(PolicyParams& policy, const PolicyParams& snapshot,
                                 const RewardFn& reward, const std::vector<PromptItem>& items,
                                 const PPOConfig& config) {
  if (config.steps < 0) throw ValidationError("steps must be nonnegative");
  std::vector<PPOLogEntry> log;
  log.reserve(static_cast<std::size_t>(config.steps));
  double baseline = 0.0;
  for (int step = 1; step <= config.steps; ++step) {
    RngStream rng = derive_stream(config.seed, "ppo-step", std::to_string(step));
    const StepStats stats =
        policy_gradient_step(policy, snapshot, reward, items, config, rng, baseline);
    log.push_back({step, stats.mean_reward, stats.mean_kl, stats.objective});
  }
  return log;
}

}  // namespace selfrank
