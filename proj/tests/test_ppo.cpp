#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "selfrank/corpus.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/policy.hpp"
#include "selfrank/ppo.hpp"
#include "selfrank/random.hpp"

using namespace selfrank;

namespace {

bool same_values(const PolicyParams& a, const PolicyParams& b) {
  return a.k == b.k && a.e == b.e && a.h == b.h && a.vocab.tokens == b.vocab.tokens &&
         a.token_embedding.v == b.token_embedding.v && a.hidden_weights.v == b.hidden_weights.v &&
         a.hidden_bias == b.hidden_bias && a.output_weights.v == b.output_weights.v &&
         a.output_bias == b.output_bias;
}

// A five-token vocabulary whose only plausible continuations are "yes" and
// "no". With all weights zero the model is a pure softmax over the output
// biases, so pushing the special tokens' biases far down leaves an exact
// two-armed bandit: P(yes) = P(no) = 1/2.
PolicyParams bandit_policy() {
  Vocabulary vocab;
  vocab.tokens = {"<unk>", "<eos>", "<pad>", "yes", "no"};
  vocab.reindex();
  PolicyParams params = make_policy(vocab, 2, 8, 8);
  params.output_bias = {-50.0, -50.0, -50.0, 0.0, 0.0};
  return params;
}

const std::vector<PromptItem> kBanditItems = {{"b0", "pick one", "pick:"}};

double yes_probability(const PolicyParams& params) {
  const std::vector<int> context = encode(params.vocab, kBanditItems[0].prompt);
  return next_token_distribution(params, context)[3];
}

double like_yes(const std::string&, const std::string& answer) {
  return answer == "yes" ? 1.0 : 0.0;
}

// Mean absolute per-sequence penalty term under fresh rollouts of the
// current policy.
double mean_abs_kl(const PolicyParams& policy, const PolicyParams& snapshot, int n_samples) {
  DecodeConfig decode;
  decode.temperature = 1.0;
  decode.top_p = 1.0;
  decode.max_length = 1;
  decode.n_samples = n_samples;
  RngStream rng(derive_seed(987, "kl-probe", ""));
  const std::vector<std::string> samples =
      sample_answers(policy, kBanditItems[0].prompt, decode, rng);
  double total = 0.0;
  for (const std::string& answer : samples) {
    const double logp_rl = sequence_log_prob(policy, kBanditItems[0].prompt, answer);
    const double logp_sft = sequence_log_prob(snapshot, kBanditItems[0].prompt, answer);
    total += std::abs(kl_term(logp_rl, logp_sft));
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

TEST_CASE("the penalty term is the difference of the two log probabilities") {
  CHECK(kl_term(-1.2, -3.4) == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(kl_term(-0.7, -0.7) == 0.0);
  CHECK(kl_term(-5.0, -2.0) == -3.0);
}

TEST_CASE("the penalty term rejects non-finite log probabilities") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kl_term(-inf, -1.0), DomainError);
  CHECK_THROWS_AS(kl_term(-1.0, nan), DomainError);
}

TEST_CASE("the objective is the mean of reward minus beta times the penalty") {
  CHECK(ppo_objective({1.0, 2.0, 3.0}, {0.5, 0.5, 0.5}, 2.0) == 1.0);
  CHECK(ppo_objective({1.0, 2.0, 3.0}, {9.0, 9.0, 9.0}, 0.0) == 2.0);
  CHECK(ppo_objective({0.25}, {0.5}, 1.0) == -0.25);
}

TEST_CASE("the objective rejects empty or mismatched sample lists") {
  CHECK_THROWS_AS(ppo_objective({}, {}, 0.5), ValidationError);
  CHECK_THROWS_AS(ppo_objective({1.0, 2.0}, {0.0}, 0.5), ValidationError);
}

TEST_CASE("the exact penalty expectation over an enumerable policy matches the divergence formula") {
  // Two bias-only models: every next-token distribution is a softmax of the
  // bias vector, so the divergence can be evaluated in closed form.
  Vocabulary vocab;
  vocab.tokens = {"<unk>", "<eos>", "<pad>", "yes", "no"};
  vocab.reindex();
  PolicyParams model_p = make_policy(vocab, 2, 8, 8);
  PolicyParams model_q = make_policy(vocab, 2, 8, 8);
  model_p.output_bias = {0.3, -0.2, 0.1, 0.8, -0.5};
  model_q.output_bias = {-0.1, 0.4, 0.0, -0.3, 0.6};

  // Hand-evaluated softmax probabilities straight from the bias vectors.
  auto softmax = [](const std::vector<double>& z) {
    double total = 0.0;
    for (double x : z) total += std::exp(x);
    std::vector<double> out;
    for (double x : z) out.push_back(std::exp(x) / total);
    return out;
  };
  const std::vector<double> p = softmax(model_p.output_bias);
  const std::vector<double> q = softmax(model_q.output_bias);
  double expected = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) expected += p[i] * std::log(p[i] / q[i]);

  // The same expectation assembled from per-sequence penalty terms, with each
  // single-token continuation scored by the models themselves.
  const std::string prompt = "pick:";
  double via_terms = 0.0;
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
    const std::string& answer = vocab.tokens[i];
    const double logp_rl = sequence_log_prob(model_p, prompt, answer);
    const double logp_sft = sequence_log_prob(model_q, prompt, answer);
    via_terms += p[i] * kl_term(logp_rl, logp_sft);
  }
  CHECK(via_terms == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected > 0.0);
}

TEST_CASE("a single step validates its arguments") {
  PolicyParams policy = bandit_policy();
  const PolicyParams snapshot = bandit_policy();
  PPOConfig config;
  RngStream rng(1);
  double baseline = 0.0;

  CHECK_THROWS_AS(policy_gradient_step(policy, snapshot, like_yes, {}, config, rng, baseline),
                  ValidationError);

  PPOConfig bad = config;
  bad.rollouts_per_step = 0;
  CHECK_THROWS_AS(policy_gradient_step(policy, snapshot, like_yes, kBanditItems, bad, rng, baseline),
                  ValidationError);

  bad = config;
  bad.beta = -0.5;
  CHECK_THROWS_AS(policy_gradient_step(policy, snapshot, like_yes, kBanditItems, bad, rng, baseline),
                  ValidationError);

  bad = config;
  bad.baseline_decay = 1.0;
  CHECK_THROWS_AS(policy_gradient_step(policy, snapshot, like_yes, kBanditItems, bad, rng, baseline),
                  ValidationError);
  bad.baseline_decay = -0.1;
  CHECK_THROWS_AS(policy_gradient_step(policy, snapshot, like_yes, kBanditItems, bad, rng, baseline),
                  ValidationError);

  Vocabulary small;
  small.tokens = {"<unk>", "<eos>", "<pad>", "x"};
  small.reindex();
  const PolicyParams other_shape = make_policy(small, 2, 8, 8);
  CHECK_THROWS_AS(
      policy_gradient_step(policy, other_shape, like_yes, kBanditItems, config, rng, baseline),
      ValidationError);

  auto nan_reward = [](const std::string&, const std::string&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(
      policy_gradient_step(policy, snapshot, nan_reward, kBanditItems, config, rng, baseline),
      NumericError);
}

TEST_CASE("training for zero steps returns an empty log and an untouched policy") {
  PolicyParams policy = bandit_policy();
  const PolicyParams before = policy;
  PPOConfig config;
  config.steps = 0;
  CHECK(run_ppo(policy, bandit_policy(), like_yes, kBanditItems, config).empty());
  CHECK(same_values(policy, before));
  config.steps = -1;
  CHECK_THROWS_AS(run_ppo(policy, bandit_policy(), like_yes, kBanditItems, config),
                  ValidationError);
}

TEST_CASE("a zero learning rate logs statistics without moving the policy") {
  PolicyParams policy = bandit_policy();
  const PolicyParams before = policy;
  PPOConfig config;
  config.beta = 0.0;
  config.steps = 5;
  config.lr = 0.0;
  config.max_length = 1;
  config.seed = 3;
  const auto log = run_ppo(policy, bandit_policy(), like_yes, kBanditItems, config);
  REQUIRE(log.size() == 5);
  CHECK(same_values(policy, before));
  for (const PPOLogEntry& entry : log) {
    CHECK(entry.mean_reward >= 0.0);
    CHECK(entry.mean_reward <= 1.0);
    CHECK(entry.mean_kl == 0.0);  // the policy never leaves the snapshot
    CHECK(entry.objective == entry.mean_reward);
  }
}

TEST_CASE("a constant reward keeps every logged reward at that constant") {
  PolicyParams policy = bandit_policy();
  PPOConfig config;
  config.beta = 0.0;
  config.steps = 10;
  config.lr = 0.1;
  config.max_length = 1;
  config.seed = 9;
  auto constant = [](const std::string&, const std::string&) { return 0.75; };
  const auto log = run_ppo(policy, bandit_policy(), constant, kBanditItems, config);
  for (const PPOLogEntry& entry : log) {
    CHECK(entry.mean_reward == 0.75);
    CHECK(entry.objective == 0.75);
  }
}

TEST_CASE("without a penalty the bandit learns to say yes within 200 steps") {
  PolicyParams policy = bandit_policy();
  const PolicyParams snapshot = bandit_policy();
  const PolicyParams snapshot_before = snapshot;
  CHECK(yes_probability(policy) == doctest::Approx(0.5).epsilon(1e-9));

  PPOConfig config;
  config.beta = 0.0;
  config.steps = 200;
  config.rollouts_per_step = 16;
  config.lr = 0.2;
  config.max_length = 1;
  config.seed = 42;
  const auto log = run_ppo(policy, snapshot, like_yes, kBanditItems, config);

  REQUIRE(log.size() == 200);
  CHECK(yes_probability(policy) > 0.9);
  // Log steps are numbered from one and the final mean reward tracks the
  // learned preference.
  CHECK(log.front().step == 1);
  CHECK(log.back().step == 200);
  CHECK(log.back().mean_reward > 0.9);
  // Moving away from the snapshot costs divergence, which the per-sequence
  // penalty terms pick up even when beta is zero.
  CHECK(log.back().mean_kl > 0.0);
  // The frozen snapshot really is frozen.
  CHECK(same_values(snapshot, snapshot_before));
}

TEST_CASE("a heavy penalty pins the bandit to its snapshot") {
  PolicyParams policy = bandit_policy();
  const PolicyParams snapshot = bandit_policy();
  PPOConfig config;
  config.beta = 10.0;
  config.steps = 100;
  config.rollouts_per_step = 16;
  config.lr = 0.05;
  config.max_length = 1;
  config.seed = 42;
  run_ppo(policy, snapshot, like_yes, kBanditItems, config);

  CHECK(mean_abs_kl(policy, snapshot, 64) < 0.05);
  // The reward still nudges the policy in the right direction, just barely.
  CHECK(yes_probability(policy) > 0.5);
  CHECK(yes_probability(policy) < 0.6);
}

TEST_CASE("training is reproducible for a fixed seed") {
  PPOConfig config;
  config.beta = 0.1;
  config.steps = 20;
  config.lr = 0.1;
  config.max_length = 1;
  config.seed = 1234;

  PolicyParams first = bandit_policy();
  const auto log_first = run_ppo(first, bandit_policy(), like_yes, kBanditItems, config);
  PolicyParams second = bandit_policy();
  const auto log_second = run_ppo(second, bandit_policy(), like_yes, kBanditItems, config);

  CHECK(same_values(first, second));
  REQUIRE(log_first.size() == log_second.size());
  for (std::size_t i = 0; i < log_first.size(); ++i) {
    CHECK(log_first[i].step == log_second[i].step);
    CHECK(log_first[i].mean_reward == log_second[i].mean_reward);
    CHECK(log_first[i].mean_kl == log_second[i].mean_kl);
    CHECK(log_first[i].objective == log_second[i].objective);
  }
}

TEST_CASE("one driver step equals one manual step on the derived stream") {
  PPOConfig config;
  config.beta = 0.0;
  config.steps = 1;
  config.lr = 0.15;
  config.max_length = 1;
  config.seed = 777;

  PolicyParams via_driver = bandit_policy();
  const auto log = run_ppo(via_driver, bandit_policy(), like_yes, kBanditItems, config);
  REQUIRE(log.size() == 1);

  PolicyParams manual = bandit_policy();
  const PolicyParams snapshot = bandit_policy();
  RngStream rng = derive_stream(config.seed, "ppo-step", "1");
  double baseline = 0.0;
  const StepStats stats =
      policy_gradient_step(manual, snapshot, like_yes, kBanditItems, config, rng, baseline);

  CHECK(same_values(via_driver, manual));
  CHECK(log[0].mean_reward == stats.mean_reward);
  CHECK(log[0].mean_kl == stats.mean_kl);
  CHECK(log[0].objective == stats.objective);
}

TEST_CASE("the bandit improves for nearly every seed") {
  int successes = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PolicyParams policy = bandit_policy();
    PPOConfig config;
    config.beta = 0.0;
    config.steps = 200;
    config.lr = 0.2;
    config.max_length = 1;
    config.seed = seed;
    run_ppo(policy, bandit_policy(), like_yes, kBanditItems, config);
    if (yes_probability(policy) > 0.9) ++successes;
    CHECK(yes_probability(policy) > 0.5);
  }
  CHECK(successes >= 18);
}
