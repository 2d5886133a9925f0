#ifndef SELFRANK_PAIRING_HPP_
#define SELFRANK_PAIRING_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selfrank/errors.hpp"
#include "selfrank/random.hpp"
#include "selfrank/textrank.hpp"

namespace selfrank {

enum class NoiseType { none, ngram_edit, negation, shuffle };

std::string to_string(NoiseType t);
NoiseType noise_type_from_string(std::string_view s);

struct AnswerPair {
  std::string qid;
  std::string winner_text;
  std::string loser_text;
  int winner_rank = 0;  // 1-based
  int loser_rank = 0;
  NoiseType noise_applied = NoiseType::none;
};

struct NoiseConfig {
  double injection_probability = 0.5;  // chance a pair's loser gets noised
  int max_ngram = 3;
};

// All (winner, loser) rank pairs of the filtered list with
// loser_rank - winner_rank >= interval_length, in lexicographic rank order.
// Pairs whose two texts are identical are skipped. cap bounds the number of
// emitted pairs; the default cap is 3x the list length.
std::vector<AnswerPair> build_pairs(const std::string& qid, const RankedAnswerList& filtered,
                                    int interval_length,
                                    std::optional<int> cap = std::nullopt);

// Single noise operators (building blocks of inject_noise). Each returns the
// corrupted text; token_pool supplies in-distribution replacement material
// for the n-gram edits (the text's own tokens stand in when it is empty).
std::string noise_ngram_edit(const std::string& text, const NoiseConfig& config,
                             const std::vector<std::string>& token_pool, RngStream& rng);
std::string noise_negation(const std::string& text, RngStream& rng);
// Requires >= 2 sentences (split on ./?/! followed by whitespace or end).
std::string noise_shuffle(const std::string& text, RngStream& rng);

std::vector<std::string> split_sentences(const std::string& text);

// Picks uniformly among the applicable operators (shuffle only for texts
// with >= 2 sentences) and guarantees output != input: an operator that
// returns the input unchanged is retried up to 5 times, then the text falls
// back to a single-token deletion.
std::pair<std::string, NoiseType> inject_noise(const std::string& text, const NoiseConfig& config,
                                               const std::vector<std::string>& token_pool,
                                               RngStream& rng);

// Noises each pair's loser independently with probability
// injection_probability; winners are never touched. A noised loser that
// collides with its winner text is redrawn a few times, then left unnoised.
std::vector<AnswerPair> make_training_set(std::vector<AnswerPair> pairs,
                                          const NoiseConfig& config,
                                          const std::vector<std::string>& token_pool,
                                          RngStream& rng);

}  // namespace selfrank

#endif  // SELFRANK_PAIRING_HPP_
