#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "selfrank/pairing.hpp"
#include "selfrank/random.hpp"

using namespace selfrank;

namespace {

RankedAnswerList make_ranked(const std::vector<std::string>& texts) {
  RankedAnswerList out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({"q#" + std::to_string(i), texts[i],
                   static_cast<double>(texts.size() - i)});
  }
  return out;
}

std::vector<std::string> words(const std::string& text) {
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

std::map<std::string, int> multiset_of(const std::vector<std::string>& tokens) {
  std::map<std::string, int> m;
  for (const auto& t : tokens) ++m[t];
  return m;
}

int negation_count(const std::string& text) {
  int count = 0;
  for (std::string t : words(text)) {
    for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (t == "not" || (t.size() >= 3 && t.compare(t.size() - 3, 3, "n't") == 0)) ++count;
  }
  return count;
}

std::vector<std::pair<int, int>> rank_pairs(const std::vector<AnswerPair>& pairs) {
  std::vector<std::pair<int, int>> out;
  for (const AnswerPair& p : pairs) out.push_back({p.winner_rank, p.loser_rank});
  return out;
}

}  // namespace

TEST_CASE("two answers with interval one give exactly one pair") {
  const auto pairs = build_pairs("q", make_ranked({"alpha", "beta"}), 1);
  CHECK(rank_pairs(pairs) == std::vector<std::pair<int, int>>{{1, 2}});
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].qid == "q");
  CHECK(pairs[0].winner_text == "alpha");
  CHECK(pairs[0].loser_text == "beta");
  CHECK(pairs[0].noise_applied == NoiseType::none);
}

TEST_CASE("four answers with interval two enumerate the three admissible pairs") {
  const auto pairs = build_pairs("q", make_ranked({"a", "b", "c", "d"}), 2);
  CHECK(rank_pairs(pairs) == std::vector<std::pair<int, int>>{{1, 3}, {1, 4}, {2, 4}});
}

TEST_CASE("an unsatisfiable interval yields no pairs") {
  CHECK(build_pairs("q", make_ranked({"a", "b", "c"}), 3).empty());
  CHECK(build_pairs("q", make_ranked({"a", "b", "c", "d", "e"}), 5).empty());
  CHECK(build_pairs("q", make_ranked({"solo"}), 1).empty());
}

TEST_CASE("pairs come out in lexicographic rank order and respect the cap") {
  const RankedAnswerList ranked = make_ranked({"a", "b", "c", "d", "e"});
  const auto all = build_pairs("q", ranked, 1);
  const std::vector<std::pair<int, int>> expect = {{1, 2}, {1, 3}, {1, 4}, {1, 5}, {2, 3},
                                                   {2, 4}, {2, 5}, {3, 4}, {3, 5}, {4, 5}};
  CHECK(rank_pairs(all) == expect);
  for (const AnswerPair& p : all) CHECK(p.loser_rank - p.winner_rank >= 1);

  const auto capped = build_pairs("q", ranked, 1, 4);
  CHECK(rank_pairs(capped) ==
        std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {1, 4}, {1, 5}});

  // Default cap is three times the list length.
  std::vector<std::string> many;
  for (int i = 0; i < 10; ++i) many.push_back("text " + std::to_string(i));
  CHECK(build_pairs("q", make_ranked(many), 1).size() == 30);
}

TEST_CASE("identical-text pairs are skipped") {
  RankedAnswerList ranked = make_ranked({"same", "b", "same", "d"});
  const auto pairs = build_pairs("q", ranked, 2);
  // (1,3) has equal texts and is dropped; (1,4) and (2,4) remain.
  CHECK(rank_pairs(pairs) == std::vector<std::pair<int, int>>{{1, 4}, {2, 4}});
  for (const AnswerPair& p : pairs) CHECK(p.winner_text != p.loser_text);
}

TEST_CASE("pair construction rejects bad arguments") {
  CHECK_THROWS_AS(build_pairs("q", {}, 1), ValidationError);
  CHECK_THROWS_AS(build_pairs("q", make_ranked({"a", "b"}), 0), ValidationError);
}

TEST_CASE("n-gram edits always disturb the token multiset") {
  const NoiseConfig config;
  const std::vector<std::string> pool = {"alpha", "beta", "gamma", "delta"};
  const std::vector<std::string> texts = {
      "one",
      "one two",
      "the quick brown fox jumps over the lazy dog",
      "repeat repeat repeat repeat",
  };
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const std::string& text = texts[static_cast<std::size_t>(seed) % texts.size()];
    const std::string out = noise_ngram_edit(text, config, pool, rng);
    CHECK(multiset_of(words(out)) != multiset_of(words(text)));

    // Every surviving token came from the original text or the pool.
    const auto original = multiset_of(words(text));
    for (const std::string& t : words(out)) {
      const bool known = original.count(t) > 0 ||
                         std::find(pool.begin(), pool.end(), t) != pool.end();
      CHECK(known);
    }
  }
}

TEST_CASE("n-gram edits fall back to the text's own tokens without a pool") {
  for (int seed = 0; seed < 50; ++seed) {
    RngStream rng(700 + static_cast<std::uint64_t>(seed));
    const std::string out = noise_ngram_edit("sun moon star", NoiseConfig{}, {}, rng);
    const auto original = multiset_of(words("sun moon star"));
    CHECK(multiset_of(words(out)) != original);
    for (const std::string& t : words(out)) CHECK(original.count(t) > 0);
  }
}

TEST_CASE("n-gram edit validates its inputs") {
  RngStream rng(1);
  CHECK_THROWS_AS(noise_ngram_edit("   ", NoiseConfig{}, {}, rng), ValidationError);
  NoiseConfig bad;
  bad.max_ngram = 0;
  CHECK_THROWS_AS(noise_ngram_edit("some text", bad, {}, rng), ValidationError);
  bad.max_ngram = 4;
  CHECK_THROWS_AS(noise_ngram_edit("some text", bad, {}, rng), ValidationError);
}

TEST_CASE("negation inserts after the first auxiliary") {
  RngStream rng(2);
  CHECK(noise_negation("it is good", rng) == "it is not good");
  CHECK(noise_negation("Is it fine", rng) == "Is not it fine");
  CHECK(noise_negation("they walk and do run", rng) == "they walk and do not run");
}

TEST_CASE("negation deletes an existing negation word first") {
  RngStream rng(3);
  CHECK(noise_negation("this is not right", rng) == "this is right");
  CHECK(noise_negation("don't stop", rng) == "stop");
  CHECK(noise_negation("not now not ever", rng) == "now not ever");
}

TEST_CASE("negation toggles the negation-word count by exactly one") {
  const std::vector<std::string> texts = {
      "it is good",        "this is not right",  "birds fly south",
      "don't stop now",    "not a chance",       "we can win",
      "they would not go", "sky",                "must we leave now",
  };
  for (int seed = 0; seed < 100; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const std::string& text = texts[static_cast<std::size_t>(seed) % texts.size()];
    const std::string out = noise_negation(text, rng);
    const int delta = negation_count(out) - negation_count(text);
    CHECK(std::abs(delta) == 1);
  }
}

TEST_CASE("negation with no auxiliary inserts at a random position") {
  for (int seed = 0; seed < 20; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const std::string out = noise_negation("birds fly south", rng);
    auto expect = multiset_of(words("birds fly south"));
    ++expect["not"];
    CHECK(multiset_of(words(out)) == expect);
  }
  RngStream rng(9);
  CHECK_THROWS_AS(noise_negation("  ", rng), ValidationError);
}

TEST_CASE("sentence splitting honors terminal punctuation before whitespace") {
  CHECK(split_sentences("Hello world. How are you? Fine!") ==
        std::vector<std::string>{"Hello world.", "How are you?", "Fine!"});
  CHECK(split_sentences("no terminal punctuation") ==
        std::vector<std::string>{"no terminal punctuation"});
  CHECK(split_sentences("One sentence.") == std::vector<std::string>{"One sentence."});
  CHECK(split_sentences("A. B") == std::vector<std::string>{"A.", "B"});
  CHECK(split_sentences("Version 1.5 shipped") ==
        std::vector<std::string>{"Version 1.5 shipped"});
  CHECK(split_sentences("").empty());
  CHECK(split_sentences("   ").empty());
}

TEST_CASE("shuffle preserves the sentence multiset") {
  const std::string text = "First point. Second point. Third point. Fourth point.";
  const auto expect = multiset_of(split_sentences(text));
  bool changed_at_least_once = false;
  for (int seed = 0; seed < 50; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const std::string out = noise_shuffle(text, rng);
    CHECK(multiset_of(split_sentences(out)) == expect);
    if (out != text) changed_at_least_once = true;
  }
  CHECK(changed_at_least_once);

  RngStream rng(1);
  CHECK_THROWS_AS(noise_shuffle("Only one sentence here.", rng), DomainError);
}

TEST_CASE("injected noise never returns the input unchanged") {
  const NoiseConfig config;
  const std::vector<std::string> pool = {"filler", "words"};
  const std::vector<std::string> texts = {
      "not",
      "it is good",
      "Same. Same. Same.",
      "one two three four",
      "He left. She stayed.",
  };
  for (int seed = 0; seed < 250; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const std::string& text = texts[static_cast<std::size_t>(seed) % texts.size()];
    const auto [out, type] = inject_noise(text, config, pool, rng);
    CHECK(out != text);
    CHECK(type != NoiseType::none);
  }
  RngStream rng(5);
  CHECK_THROWS_AS(inject_noise("   ", config, pool, rng), ValidationError);
}

TEST_CASE("single-sentence texts are never shuffled") {
  const NoiseConfig config;
  for (int seed = 0; seed < 100; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const auto [out, type] = inject_noise("just one sentence here", config, {}, rng);
    (void)out;
    CHECK(type != NoiseType::shuffle);
  }
}

TEST_CASE("multi-sentence texts draw all three noise types eventually") {
  const NoiseConfig config;
  bool saw_shuffle = false, saw_negation = false, saw_edit = false;
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const auto [out, type] =
        inject_noise("The sky is blue. Grass is green. Water is wet.", config, {}, rng);
    (void)out;
    if (type == NoiseType::shuffle) saw_shuffle = true;
    if (type == NoiseType::negation) saw_negation = true;
    if (type == NoiseType::ngram_edit) saw_edit = true;
  }
  CHECK(saw_shuffle);
  CHECK(saw_negation);
  CHECK(saw_edit);
}

TEST_CASE("zero injection probability leaves the training set untouched") {
  auto pairs = build_pairs("q", make_ranked({"aa", "bb", "cc", "dd"}), 1);
  NoiseConfig config;
  config.injection_probability = 0.0;
  RngStream rng(11);
  const auto out = make_training_set(pairs, config, {}, rng);
  REQUIRE(out.size() == pairs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].winner_text == pairs[i].winner_text);
    CHECK(out[i].loser_text == pairs[i].loser_text);
    CHECK(out[i].noise_applied == NoiseType::none);
  }
}

TEST_CASE("certain injection noises every loser and spares every winner") {
  auto pairs = build_pairs(
      "q", make_ranked({"alpha bravo charlie", "delta echo foxtrot", "golf hotel india",
                        "juliet kilo lima"}),
      1);
  NoiseConfig config;
  config.injection_probability = 1.0;
  RngStream rng(13);
  const auto out = make_training_set(pairs, config, {"mike", "november"}, rng);
  REQUIRE(out.size() == pairs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].noise_applied != NoiseType::none);
    CHECK(out[i].loser_text != pairs[i].loser_text);   // the loser changed
    CHECK(out[i].winner_text == pairs[i].winner_text);  // the winner did not
    CHECK(out[i].loser_text != out[i].winner_text);
    CHECK(out[i].winner_rank == pairs[i].winner_rank);
    CHECK(out[i].loser_rank == pairs[i].loser_rank);
  }
}

TEST_CASE("a pair whose loser is empty passes through unnoised") {
  std::vector<AnswerPair> pairs = {
      {"q0", "winner words", "", 1, 3, NoiseType::none},
      {"q1", "alpha bravo charlie", "delta echo foxtrot", 1, 3, NoiseType::none}};
  NoiseConfig config;
  config.injection_probability = 1.0;
  RngStream rng(17);
  const auto out = make_training_set(pairs, config, {"mike", "november"}, rng);
  REQUIRE(out.size() == 2);
  CHECK(out[0].loser_text.empty());
  CHECK(out[0].noise_applied == NoiseType::none);
  CHECK(out[1].noise_applied != NoiseType::none);
  CHECK(out[1].loser_text != pairs[1].loser_text);
}

TEST_CASE("half-probability injection hits between 48 and 52 percent of 10000 pairs") {
  std::vector<AnswerPair> pairs;
  for (int i = 0; i < 10000; ++i) {
    pairs.push_back({"q" + std::to_string(i), "winner text here",
                     "loser text number " + std::to_string(i), 1, 3, NoiseType::none});
  }
  NoiseConfig config;  // injection_probability defaults to 0.5
  RngStream rng(derive_seed(42, "pair", ""));
  const auto out = make_training_set(pairs, config, {"spare", "parts"}, rng);
  int noised = 0;
  for (const AnswerPair& p : out) {
    if (p.noise_applied != NoiseType::none) ++noised;
  }
  const double fraction = static_cast<double>(noised) / 10000.0;
  CHECK(fraction >= 0.48);
  CHECK(fraction <= 0.52);
}

TEST_CASE("training-set construction rejects an out-of-range probability") {
  NoiseConfig config;
  config.injection_probability = 1.5;
  RngStream rng(1);
  CHECK_THROWS_AS(make_training_set({}, config, {}, rng), ValidationError);
  config.injection_probability = -0.1;
  CHECK_THROWS_AS(make_training_set({}, config, {}, rng), ValidationError);
}

TEST_CASE("noise type names round-trip through their string form") {
  for (NoiseType t : {NoiseType::none, NoiseType::ngram_edit, NoiseType::negation,
                      NoiseType::shuffle}) {
    CHECK(noise_type_from_string(to_string(t)) == t);
  }
  CHECK_THROWS_AS(noise_type_from_string("static"), ParseError);
}
