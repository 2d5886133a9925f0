#ifndef SELFRANK_POLICY_HPP_
#define SELFRANK_POLICY_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfrank/corpus.hpp"
#include "selfrank/errors.hpp"
#include "selfrank/linalg.hpp"
#include "selfrank/random.hpp"

namespace selfrank {

// Whitespace word tokens, lowercased.
std::vector<std::string> tokenize(std::string_view text);

struct Vocabulary {
  std::vector<std::string> tokens;  // index == token id
  int unk_id = 0;
  int eos_id = 1;
  int pad_id = 2;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(std::string_view token) const;  // unk_id for unknown tokens
  const std::string& token(int id) const;

  // Rebuilds the internal token -> id map; called by the factories below.
  void reindex();

 private:
  std::unordered_map<std::string, int> index_;
};

// Specials first (<unk>, <eos>, <pad>), then the most frequent whitespace
// tokens of the corpus questions and reference answers, capped at max_size.
// Ties broken by ascending token text, so record order never matters.
Vocabulary build_vocabulary(const std::vector<QARecord>& corpus, int max_size);

std::vector<int> encode(const Vocabulary& vocab, std::string_view text);

// Fixed-window feed-forward next-token model: the last k token embeddings are
// concatenated, passed through one tanh hidden layer, and projected to logits
// over the vocabulary.
struct PolicyParams {
  int k = 2;   // context window
  int e = 32;  // token embedding width
  int h = 64;  // hidden width
  Vocabulary vocab;
  Mat token_embedding;              // V x E
  Mat hidden_weights;               // (k*E) x H
  std::vector<double> hidden_bias;  // H
  Mat output_weights;               // H x V
  std::vector<double> output_bias;  // V

  bool same_shape(const PolicyParams& o) const;
};

// All-zero parameters of the given shape (uniform next-token distribution).
PolicyParams make_policy(const Vocabulary& vocab, int k, int e, int h);
// Uniform(-scale, scale) weights, zero biases.
void randomize_policy(PolicyParams& params, RngStream& rng, double scale = 0.05);

struct DecodeConfig {
  double temperature = 0.8;
  double top_p = 0.95;
  int max_length = 100;
  int n_samples = 16;
};

// Mean per-token cross-entropy losses, one entry per epoch. Training runs
// plain SGD, one parameter update per sequence, over prompt+answer+eos token
// streams in corpus order. epochs == 0 leaves the parameters untouched.
std::vector<double> train_sft(PolicyParams& params, const std::vector<QARecord>& corpus,
                              const std::string& prompt_template, int epochs, double lr);

// Softmax over logits for the last k context tokens (left-padded with pad).
std::vector<double> next_token_distribution(const PolicyParams& params,
                                            const std::vector<int>& context);

// P'(w) = P(w)^(1/tau) / sum P(w')^(1/tau), computed on log probabilities for
// stability. tau == 1 returns the input unchanged.
std::vector<double> apply_temperature(const std::vector<double>& probs, double tau);

// Keeps the smallest descending-probability prefix with cumulative mass >= p
// (ties by ascending token id), zeroes the rest, renormalizes. p == 1 returns
// the input unchanged.
std::vector<double> top_p_filter(const std::vector<double>& probs, double p);

// n_samples independent answers for one prompt; each stops at eos or at
// max_length tokens. Pure function of (params, prompt, config, stream state).
std::vector<std::string> sample_answers(const PolicyParams& params, const std::string& prompt,
                                        const DecodeConfig& config, RngStream& rng);

// Sum of log next-token probabilities of the answer tokens, conditioning on
// the prompt plus previously generated answer tokens. Empty answer: 0 with a
// warning.
double sequence_log_prob(const PolicyParams& params, const std::string& prompt,
                         const std::string& answer);

// Checkpoint: binary header {k, V, E, H} as little-endian u32, then float32
// row-major matrices; the vocabulary rides in a JSONL sidecar at
// path + ".vocab.jsonl".
void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

namespace detail {

// Accumulates d(loss)/d(params) for -coeff * log p(target | context) into
// grads; shared by supervised training and the policy-gradient stage.
struct PolicyGrads {
  Mat token_embedding;
  Mat hidden_weights;
  std::vector<double> hidden_bias;
  Mat output_weights;
  std::vector<double> output_bias;

  explicit PolicyGrads(const PolicyParams& p);
  void zero();
};

void accumulate_log_prob_grad(const PolicyParams& params, const std::vector<int>& context,
                              int target, double coeff, PolicyGrads& grads);
void apply_grads(PolicyParams& params, const PolicyGrads& grads, double scale);
std::vector<int> window(const PolicyParams& params, const std::vector<int>& context);

}  // namespace detail

}  // namespace selfrank

#endif  // SELFRANK_POLICY_HPP_
