#ifndef SELFRANK_REWARD_HPP_
#define SELFRANK_REWARD_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "selfrank/embedding.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/linalg.hpp"

namespace selfrank {

// Two-layer scorer over pair features [q; a; q*a; |q-a|]: tanh hidden layer,
// scalar output. The output layer starts at zero, so an untrained model
// scores everything 0 and the pairwise loss starts at exactly ln 2.
struct RewardParams {
  int d = 0;      // embedding dimension D (features are 4*D wide)
  int h = 64;     // hidden width
  std::uint64_t seed = 0;
  Mat hidden_weights;                  // (4*D) x H
  std::vector<double> hidden_bias;     // H
  std::vector<double> output_weights;  // H
  double output_bias = 0.0;
};

RewardParams init_reward(int d, int h, std::uint64_t seed);

struct RewardTrainConfig {
  int batch_size = 16;
  double lr = 3e-5;
  int epochs = 50;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// [q; a; q*a; |q-a|], length 4*D.
std::vector<double> pair_features(const EmbeddingVector& q, const EmbeddingVector& a);

double reward_score(const RewardParams& params, const EmbeddingVector& q,
                    const EmbeddingVector& a);

// Logistic sigmoid of score(winner) - score(loser). The shared output bias
// cancels algebraically, so shifting it never perturbs this value.
double pair_probability(const RewardParams& params, const EmbeddingVector& q,
                        const EmbeddingVector& winner, const EmbeddingVector& loser);

struct PairExample {
  EmbeddingVector question;
  EmbeddingVector winner;
  EmbeddingVector loser;
};

// Mean over the batch of -log pair_probability.
double reward_loss(const RewardParams& params, const std::vector<PairExample>& batch);

struct RewardGrads {
  Mat hidden_weights;
  std::vector<double> hidden_bias;
  std::vector<double> output_weights;
  double output_bias = 0.0;

  explicit RewardGrads(const RewardParams& p);
};

// Analytic gradient of reward_loss over the batch; returns the loss too.
RewardGrads reward_loss_gradient(const RewardParams& params,
                                 const std::vector<PairExample>& batch, double* loss_out);

// Adam with decoupled weight decay (decay applies to the weight matrices,
// not the biases), shuffled mini-batches, deterministic under config.seed.
RewardParams train_reward(const std::vector<PairExample>& pairs, int d,
                          const RewardTrainConfig& config,
                          std::vector<double>* epoch_losses = nullptr);

// Checkpoint: one JSON header line {"d", "h", "seed"}, then float32 blobs.
void save_reward(const RewardParams& params, const std::filesystem::path& path);
RewardParams load_reward(const std::filesystem::path& path);

}  // namespace selfrank

#endif  // SELFRANK_REWARD_HPP_
