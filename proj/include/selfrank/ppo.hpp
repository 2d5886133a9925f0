#ifndef SELFRANK_PPO_HPP_
#define SELFRANK_PPO_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "selfrank/errors.hpp"
#include "selfrank/policy.hpp"
#include "selfrank/random.hpp"

namespace selfrank {

struct PPOConfig {
  double beta = 0.5;          // weight of the log-ratio penalty
  int steps = 50;
  int rollouts_per_step = 16;
  double lr = 0.05;
  double baseline_decay = 0.9;  // exponential moving-average return baseline
  std::uint64_t seed = 0;
  int max_length = 100;         // rollout length cap
  double clip_epsilon = 0.0;    // > 0 enables ratio clipping (off by default)
};

// Scalar reward for a (question, answer) pair. The pipeline binds the trained
// reward model here; tests may pass any scoring function.
using RewardFn = std::function<double(const std::string& question, const std::string& answer)>;

struct PromptItem {
  std::string qid;
  std::string question;  // raw question, handed to the reward function
  std::string prompt;    // templated text the policy conditions on
};

// Per-sample penalty term log pi_RL(y|x) - log pi_SFT(y|x); its expectation
// under pi_RL is the KL divergence.
double kl_term(double logp_rl, double logp_sft);

// Mean over samples of reward - beta * kl.
double ppo_objective(const std::vector<double>& rewards, const std::vector<double>& kls,
                     double beta);

struct StepStats {
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
};

// One score-function update: samples rollouts from the current policy
// (temperature 1, full nucleus, so the samples follow the policy exactly),
// folds the penalty into the per-sequence return, subtracts the moving
// baseline, and ascends the mean advantage-weighted log-probability
// gradient. The baseline is read before it absorbs this step's returns.
StepStats policy_gradient_step(PolicyParams& params, const PolicyParams& snapshot,
                               const RewardFn& reward, const std::vector<PromptItem>& items,
                               const PPOConfig& config, RngStream& rng, double& baseline);

struct PPOLogEntry {
  int step = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
};

// config.steps gradient steps with per-step derived streams; returns the
// training log. The snapshot is never modified.
std::vector<PPOLogEntry> run_ppo(PolicyParams& policy, const PolicyParams& snapshot,
                                 const RewardFn& reward, const std::vector<PromptItem>& items,
                                 const PPOConfig& config);

}  // namespace selfrank

#endif  // SELFRANK_PPO_HPP_
