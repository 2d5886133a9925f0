#include "selfrank/pairing.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

namespace selfrank {

std::string to_string(NoiseType t) {
  switch (t) {
    case NoiseType::none: return "none";
    case NoiseType::ngram_edit: return "ngram_edit";
    case NoiseType::negation: return "negation";
    case NoiseType::shuffle: return "shuffle";
  }
  return "none";
}

NoiseType noise_type_from_string(std::string_view s) {
  if (s == "none") return NoiseType::none;
  if (s == "ngram_edit") return NoiseType::ngram_edit;
  if (s == "negation") return NoiseType::negation;
  if (s == "shuffle") return NoiseType::shuffle;
  throw ParseError("unknown noise type: " + std::string(s));
}

std::vector<AnswerPair> build_pairs(const std::string& qid, const RankedAnswerList& filtered,
                                    int interval_length, std::optional<int> cap) {
  if (filtered.empty()) throw ValidationError("cannot build pairs from an empty ranked list");
  if (interval_length < 1) throw ValidationError("interval length must be positive");
  const int m = static_cast<int>(filtered.size());
  const int limit = cap.value_or(3 * m);
  std::vector<AnswerPair> pairs;
  for (int w = 1; w <= m && static_cast<int>(pairs.size()) < limit; ++w) {
    for (int l = w + interval_length; l <= m && static_cast<int>(pairs.size()) < limit; ++l) {
      const RankedAnswer& winner = filtered[static_cast<std::size_t>(w - 1)];
      const RankedAnswer& loser = filtered[static_cast<std::size_t>(l - 1)];
      if (winner.text == loser.text) continue;
      pairs.push_back({qid, winner.text, loser.text, w, l, NoiseType::none});
    }
  }
  return pairs;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_negation_word(const std::string& token) {
  const std::string t = lower(token);
  if (t == "not") return true;
  return t.size() >= 3 && t.compare(t.size() - 3, 3, "n't") == 0;
}

bool same_multiset(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::string, int> counts;
  for (const auto& t : a) ++counts[t];
  for (const auto& t : b) {
    if (--counts[t] < 0) return false;
  }
  return true;
}

std::vector<std::string> draw_gram(const std::vector<std::string>& pool, std::size_t n,
                                   RngStream& rng) {
  const std::size_t m = std::min(n, pool.size());
  const std::size_t start = rng.next_index(pool.size() - m + 1);
  return {pool.begin() + static_cast<std::ptrdiff_t>(start),
          pool.begin() + static_cast<std::ptrdiff_t>(start + m)};
}

}  // namespace

std::string noise_ngram_edit(const std::string& text, const NoiseConfig& config,
                             const std::vector<std::string>& token_pool, RngStream& rng) {
  std::vector<std::string> tokens = split_words(text);
  if (tokens.empty()) throw ValidationError("cannot noise a text with no tokens");
  if (config.max_ngram < 1 || config.max_ngram > 3) {
    throw ValidationError("max_ngram must lie in [1, 3]");
  }
  const std::vector<std::string>& pool = token_pool.empty() ? tokens : token_pool;
  const std::size_t n = 1 + rng.next_index(static_cast<std::size_t>(config.max_ngram));

  enum class Op { del, replace, insert };
  std::vector<Op> ops;
  if (tokens.size() >= 2) ops.push_back(Op::del);
  ops.push_back(Op::replace);
  ops.push_back(Op::insert);
  const Op op = ops[rng.next_index(ops.size())];

  std::vector<std::string> result = tokens;
  switch (op) {
    case Op::del: {
      const std::size_t len = std::min(n, tokens.size() - 1);
      const std::size_t pos = rng.next_index(tokens.size() - len + 1);
      result.erase(result.begin() + static_cast<std::ptrdiff_t>(pos),
                   result.begin() + static_cast<std::ptrdiff_t>(pos + len));
      break;
    }
    case Op::replace: {
      const std::size_t len = std::min(n, tokens.size());
      const std::size_t pos = rng.next_index(tokens.size() - len + 1);
      const std::vector<std::string> gram = draw_gram(pool, len, rng);
      result.erase(result.begin() + static_cast<std::ptrdiff_t>(pos),
                   result.begin() + static_cast<std::ptrdiff_t>(pos + len));
      result.insert(result.begin() + static_cast<std::ptrdiff_t>(pos), gram.begin(), gram.end());
      break;
    }
    case Op::insert: {
      const std::vector<std::string> gram = draw_gram(pool, n, rng);
      const std::size_t pos = rng.next_index(tokens.size() + 1);
      result.insert(result.begin() + static_cast<std::ptrdiff_t>(pos), gram.begin(), gram.end());
      break;
    }
  }
  // The edit must disturb the token multiset or the length; a replacement
  // that only permuted tokens is demoted to a deletion (or an insertion when
  // there is nothing to delete).
  if (same_multiset(result, tokens)) {
    result = tokens;
    if (tokens.size() >= 2) {
      const std::size_t pos = rng.next_index(tokens.size());
      result.erase(result.begin() + static_cast<std::ptrdiff_t>(pos));
    } else {
      const std::vector<std::string> gram = draw_gram(pool, 1, rng);
      const std::size_t pos = rng.next_index(tokens.size() + 1);
      result.insert(result.begin() + static_cast<std::ptrdiff_t>(pos), gram.begin(), gram.end());
    }
  }
  return join_words(result);
}

std::string noise_negation(const std::string& text, RngStream& rng) {
  std::vector<std::string> tokens = split_words(text);
  if (tokens.empty()) throw ValidationError("cannot noise a text with no tokens");
  static const std::array<const char*, 17> kAuxiliaries = {
      "is",  "are",   "was",  "were",  "am",  "do",     "does", "did", "can",
      "could", "will", "would", "have", "has", "had",    "should", "must"};

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_negation_word(tokens[i])) {
      tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i));
      return join_words(tokens);
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string t = lower(tokens[i]);
    for (const char* aux : kAuxiliaries) {
      if (t == aux) {
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(i + 1), "not");
        return join_words(tokens);
      }
    }
  }
  const std::size_t pos = rng.next_index(tokens.size());
  tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), "not");
  return join_words(tokens);
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> sentences;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    cur.push_back(c);
    const bool terminal = c == '.' || c == '?' || c == '!';
    const bool boundary =
        terminal && (i + 1 == text.size() ||
                     std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (boundary) {
      // Trim surrounding whitespace; empty fragments are dropped.
      const auto b = cur.find_first_not_of(" \t\r\n");
      if (b != std::string::npos) {
        const auto e = cur.find_last_not_of(" \t\r\n");
        sentences.push_back(cur.substr(b, e - b + 1));
      }
      cur.clear();
    }
  }
  const auto b = cur.find_first_not_of(" \t\r\n");
  if (b != std::string::npos) {
    const auto e = cur.find_last_not_of(" \t\r\n");
    sentences.push_back(cur.substr(b, e - b + 1));
  }
  return sentences;
}

std::string noise_shuffle(const std::string& text, RngStream& rng) {
  std::vector<std::string> sentences = split_sentences(text);
  if (sentences.size() < 2) throw DomainError("shuffle requires at least two sentences");
  for (std::size_t i = sentences.size() - 1; i > 0; --i) {
    const std::size_t j = rng.next_index(i + 1);
    std::swap(sentences[i], sentences[j]);
  }
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out.push_back(' ');
    out += sentences[i];
  }
  return out;
}

std::pair<std::string, NoiseType> inject_noise(const std::string& text, const NoiseConfig& config,
                                               const std::vector<std::string>& token_pool,
                                               RngStream& rng) {
  if (split_words(text).empty()) throw ValidationError("cannot noise a text with no tokens");
  std::vector<NoiseType> applicable = {NoiseType::ngram_edit, NoiseType::negation};
  if (split_sentences(text).size() >= 2) applicable.push_back(NoiseType::shuffle);
  const NoiseType chosen = applicable[rng.next_index(applicable.size())];

  for (int attempt = 0; attempt < 5; ++attempt) {
    std::string out;
    switch (chosen) {
      case NoiseType::ngram_edit: out = noise_ngram_edit(text, config, token_pool, rng); break;
      case NoiseType::negation: out = noise_negation(text, rng); break;
      case NoiseType::shuffle: out = noise_shuffle(text, rng); break;
      case NoiseType::none: break;
    }
    if (out != text) return {out, chosen};
  }
  // Deletion fallback: dropping one token always changes the text.
  std::vector<std::string> tokens = split_words(text);
  const std::size_t pos = rng.next_index(tokens.size());
  tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(pos));
  return {join_words(tokens), NoiseType::ngram_edit};
}

std::vector<AnswerPair> make_training_set(std::vector<AnswerPair> pairs,
                                          const NoiseConfig& config,
                                          const std::vector<std::string>& token_pool,
                                          RngStream& rng) {
  if (config.injection_probability < 0.0 || config.injection_probability > 1.0) {
    throw ValidationError("injection probability must lie in [0, 1]");
  }
  for (AnswerPair& pair : pairs) {
    // A sampled answer can be empty (the policy may end a sequence immediately).
    // There is nothing to corrupt in that case, so the pair passes through as-is.
    if (split_words(pair.loser_text).empty()) continue;
    const double u = rng.next_double();
    if (u >= config.injection_probability) continue;
    std::string noised;
    NoiseType type = NoiseType::none;
    bool ok = false;
    for (int attempt = 0; attempt < 4; ++attempt) {
      auto [out, t] = inject_noise(pair.loser_text, config, token_pool, rng);
      if (out != pair.winner_text) {
        noised = std::move(out);
        type = t;
        ok = true;
        break;
      }
    }
    if (!ok) {
      log_warning("noise injection for qid " + pair.qid +
                  " kept colliding with the winner; leaving the loser unnoised");
      continue;
    }
    pair.loser_text = std::move(noised);
    pair.noise_applied = type;
  }
  return pairs;
}

}  // namespace selfrank
