#include "selfrank/policy.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

namespace selfrank {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DomainError("token id out of range: " + std::to_string(id));
  return tokens[static_cast<std::size_t>(id)];
}

void Vocabulary::reindex() {
  index_.clear();
  for (int i = 0; i < size(); ++i) index_.emplace(tokens[static_cast<std::size_t>(i)], i);
  if (static_cast<int>(index_.size()) != size()) {
    throw ValidationError("vocabulary tokens are not unique");
  }
}

Vocabulary build_vocabulary(const std::vector<QARecord>& corpus, int max_size) {
  if (corpus.empty()) throw ValidationError("corpus empty");
  if (max_size < 1) throw ValidationError("vocabulary max_size must be positive");
  std::map<std::string, std::int64_t> counts;
  for (const QARecord& r : corpus) {
    for (auto& t : tokenize(r.question)) ++counts[t];
    for (auto& t : tokenize(r.reference_answer)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::int64_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  v.tokens = {"<unk>", "<eos>", "<pad>"};
  v.unk_id = 0;
  v.eos_id = 1;
  v.pad_id = 2;
  for (const auto& [tok, cnt] : ordered) {
    if (static_cast<int>(v.tokens.size()) - 3 >= max_size) break;
    if (tok == "<unk>" || tok == "<eos>" || tok == "<pad>") continue;
    v.tokens.push_back(tok);
  }
  v.reindex();
  return v;
}

std::vector<int> encode(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(vocab.id_of(t));
  return ids;
}

bool PolicyParams::same_shape(const PolicyParams& o) const {
  return k == o.k && e == o.e && h == o.h && vocab.size() == o.vocab.size();
}

PolicyParams make_policy(const Vocabulary& vocab, int k, int e, int h) {
  if (k < 1 || e < 1 || h < 1) throw ValidationError("policy shape values must be positive");
  PolicyParams p;
  p.k = k;
  p.e = e;
  p.h = h;
  p.vocab = vocab;
  p.vocab.reindex();
  const int v = vocab.size();
  p.token_embedding = Mat(v, e);
  p.hidden_weights = Mat(k * e, h);
  p.hidden_bias.assign(static_cast<std::size_t>(h), 0.0);
  p.output_weights = Mat(h, v);
  p.output_bias.assign(static_cast<std::size_t>(v), 0.0);
  return p;
}

void randomize_policy(PolicyParams& params, RngStream& rng, double scale) {
  for (double& x : params.token_embedding.v) x = rng.uniform(-scale, scale);
  for (double& x : params.hidden_weights.v) x = rng.uniform(-scale, scale);
  for (double& x : params.output_weights.v) x = rng.uniform(-scale, scale);
}

namespace detail {

std::vector<int> window(const PolicyParams& params, const std::vector<int>& context) {
  std::vector<int> win(static_cast<std::size_t>(params.k), params.vocab.pad_id);
  const int n = static_cast<int>(context.size());
  for (int i = 0; i < params.k && i < n; ++i) {
    win[static_cast<std::size_t>(params.k - 1 - i)] = context[static_cast<std::size_t>(n - 1 - i)];
  }
  return win;
}

PolicyGrads::PolicyGrads(const PolicyParams& p)
    : token_embedding(p.token_embedding.rows, p.token_embedding.cols),
      hidden_weights(p.hidden_weights.rows, p.hidden_weights.cols),
      hidden_bias(p.hidden_bias.size(), 0.0),
      output_weights(p.output_weights.rows, p.output_weights.cols),
      output_bias(p.output_bias.size(), 0.0) {}

void PolicyGrads::zero() {
  token_embedding.zero();
  hidden_weights.zero();
  std::fill(hidden_bias.begin(), hidden_bias.end(), 0.0);
  output_weights.zero();
  std::fill(output_bias.begin(), output_bias.end(), 0.0);
}

}  // namespace detail

namespace {

struct ForwardState {
  std::vector<int> win;       // k ids
  std::vector<double> x;      // k*E concatenated embeddings
  std::vector<double> h;      // H tanh activations
  std::vector<double> probs;  // V softmax
};

ForwardState forward_pass(const PolicyParams& p, const std::vector<int>& context) {
  const int v = p.vocab.size();
  for (int id : context) {
    if (id < 0 || id >= v) throw DomainError("token id out of range: " + std::to_string(id));
  }
  ForwardState f;
  f.win = detail::window(p, context);
  f.x.resize(static_cast<std::size_t>(p.k) * p.e);
  for (int t = 0; t < p.k; ++t) {
    const double* emb = p.token_embedding.row(f.win[static_cast<std::size_t>(t)]);
    std::copy(emb, emb + p.e, f.x.begin() + static_cast<std::size_t>(t) * p.e);
  }
  f.h.assign(static_cast<std::size_t>(p.h), 0.0);
  const int ke = p.k * p.e;
  for (int i = 0; i < ke; ++i) {
    const double xi = f.x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    const double* w = p.hidden_weights.row(i);
    for (int j = 0; j < p.h; ++j) f.h[static_cast<std::size_t>(j)] += xi * w[j];
  }
  for (int j = 0; j < p.h; ++j) {
    f.h[static_cast<std::size_t>(j)] =
        std::tanh(f.h[static_cast<std::size_t>(j)] + p.hidden_bias[static_cast<std::size_t>(j)]);
  }
  std::vector<double> logits(p.output_bias);
  for (int j = 0; j < p.h; ++j) {
    const double hj = f.h[static_cast<std::size_t>(j)];
    if (hj == 0.0) continue;
    const double* w = p.output_weights.row(j);
    for (int t = 0; t < v; ++t) logits[static_cast<std::size_t>(t)] += hj * w[t];
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  f.probs.resize(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    f.probs[t] = std::exp(logits[t] - mx);
    sum += f.probs[t];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericError("next-token softmax degenerated");
  for (double& pr : f.probs) pr /= sum;
  return f;
}

// Accumulates d(-coeff * log p[target])/d(params) into grads given a finished
// forward pass.
void backprop(const PolicyParams& p, const ForwardState& f, int target, double coeff,
              detail::PolicyGrads& g) {
  const int v = p.vocab.size();
  if (target < 0 || target >= v) {
    throw DomainError("target token id out of range: " + std::to_string(target));
  }
  std::vector<double> dlogits(f.probs);
  for (double& d : dlogits) d *= coeff;
  dlogits[static_cast<std::size_t>(target)] -= coeff;

  std::vector<double> dh(static_cast<std::size_t>(p.h), 0.0);
  for (int j = 0; j < p.h; ++j) {
    const double hj = f.h[static_cast<std::size_t>(j)];
    double* gw = g.output_weights.row(j);
    const double* w = p.output_weights.row(j);
    double acc = 0.0;
    for (int t = 0; t < v; ++t) {
      gw[t] += hj * dlogits[static_cast<std::size_t>(t)];
      acc += w[t] * dlogits[static_cast<std::size_t>(t)];
    }
    dh[static_cast<std::size_t>(j)] = acc;
  }
  axpy(1.0, dlogits, g.output_bias);

  std::vector<double> dpre(static_cast<std::size_t>(p.h));
  for (int j = 0; j < p.h; ++j) {
    const double hj = f.h[static_cast<std::size_t>(j)];
    dpre[static_cast<std::size_t>(j)] = dh[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
  }
  axpy(1.0, dpre, g.hidden_bias);

  const int ke = p.k * p.e;
  std::vector<double> dx(static_cast<std::size_t>(ke), 0.0);
  for (int i = 0; i < ke; ++i) {
    const double xi = f.x[static_cast<std::size_t>(i)];
    double* gw = g.hidden_weights.row(i);
    const double* w = p.hidden_weights.row(i);
    double acc = 0.0;
    for (int j = 0; j < p.h; ++j) {
      gw[j] += xi * dpre[static_cast<std::size_t>(j)];
      acc += w[j] * dpre[static_cast<std::size_t>(j)];
    }
    dx[static_cast<std::size_t>(i)] = acc;
  }
  for (int t = 0; t < p.k; ++t) {
    double* ge = g.token_embedding.row(f.win[static_cast<std::size_t>(t)]);
    const double* dxt = dx.data() + static_cast<std::size_t>(t) * p.e;
    for (int i = 0; i < p.e; ++i) ge[i] += dxt[i];
  }
}

constexpr double kMinProb = 1e-300;

}  // namespace

namespace detail {

void accumulate_log_prob_grad(const PolicyParams& params, const std::vector<int>& context,
                              int target, double coeff, PolicyGrads& grads) {
  const ForwardState f = forward_pass(params, context);
  backprop(params, f, target, coeff, grads);
}

void apply_grads(PolicyParams& params, const PolicyGrads& grads, double scale) {
  axpy(-scale, grads.token_embedding, params.token_embedding);
  axpy(-scale, grads.hidden_weights, params.hidden_weights);
  axpy(-scale, grads.hidden_bias, params.hidden_bias);
  axpy(-scale, grads.output_weights, params.output_weights);
  axpy(-scale, grads.output_bias, params.output_bias);
}

}  // namespace detail

std::vector<double> train_sft(PolicyParams& params, const std::vector<QARecord>& corpus,
                              const std::string& prompt_template, int epochs, double lr) {
  if (corpus.empty()) throw ValidationError("corpus empty");
  if (lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (epochs < 0) throw ValidationError("epochs must be nonnegative");

  std::vector<std::vector<int>> sequences;
  sequences.reserve(corpus.size());
  for (const QARecord& r : corpus) {
    std::vector<int> ids = encode(params.vocab, apply_prompt(prompt_template, r.question));
    const std::vector<int> ans = encode(params.vocab, r.reference_answer);
    ids.insert(ids.end(), ans.begin(), ans.end());
    ids.push_back(params.vocab.eos_id);
    sequences.push_back(std::move(ids));
  }

  std::vector<double> epoch_losses;
  detail::PolicyGrads grads(params);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double nll = 0.0;
    std::int64_t tokens = 0;
    for (const auto& seq : sequences) {
      grads.zero();
      const double coeff = 1.0 / static_cast<double>(seq.size());
      std::vector<int> context;
      context.reserve(seq.size());
      for (int target : seq) {
        const ForwardState f = forward_pass(params, context);
        nll -= std::log(std::max(f.probs[static_cast<std::size_t>(target)], kMinProb));
        backprop(params, f, target, coeff, grads);
        context.push_back(target);
        ++tokens;
      }
      detail::apply_grads(params, grads, lr);
    }
    const double mean = nll / static_cast<double>(tokens);
    if (!std::isfinite(mean)) {
      throw NumericError("supervised training diverged: non-finite loss at epoch " +
                         std::to_string(epoch + 1));
    }
    epoch_losses.push_back(mean);
  }
  return epoch_losses;
}

std::vector<double> next_token_distribution(const PolicyParams& params,
                                            const std::vector<int>& context) {
  return forward_pass(params, context).probs;
}

namespace {

void check_distribution(const std::vector<double>& probs) {
  if (probs.empty()) throw DomainError("empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw DomainError("invalid probability entry");
    sum += p;
  }
  if (sum <= 0.0) throw DomainError("zero probability vector");
  if (std::abs(sum - 1.0) > 1e-6) throw DomainError("probabilities do not sum to 1");
}

}  // namespace

std::vector<double> apply_temperature(const std::vector<double>& probs, double tau) {
  if (tau <= 0.0) throw DomainError("temperature must be positive");
  check_distribution(probs);
  if (tau == 1.0) return probs;

  std::vector<double> scaled(probs.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    scaled[i] = probs[i] > 0.0 ? std::log(probs[i]) / tau : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, scaled[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    scaled[i] = probs[i] > 0.0 ? std::exp(scaled[i] - mx) : 0.0;
    sum += scaled[i];
  }
  for (double& p : scaled) p /= sum;
  return scaled;
}

std::vector<double> top_p_filter(const std::vector<double>& probs, double p) {
  if (!(p > 0.0) || p > 1.0) throw DomainError("top-p must be in (0, 1]");
  check_distribution(probs);
  if (p == 1.0) return probs;

  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = probs[static_cast<std::size_t>(a)];
    const double pb = probs[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });

  std::vector<double> out(probs.size(), 0.0);
  double kept = 0.0;
  std::size_t count = 0;
  for (int idx : order) {
    kept += probs[static_cast<std::size_t>(idx)];
    ++count;
    if (kept >= p - 1e-12) break;
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = static_cast<std::size_t>(order[i]);
    out[idx] = probs[idx] / kept;
  }
  return out;
}

std::vector<std::string> sample_answers(const PolicyParams& params, const std::string& prompt,
                                        const DecodeConfig& config, RngStream& rng) {
  if (config.n_samples < 0) throw ValidationError("n_samples must be nonnegative");
  if (config.max_length < 1) throw ValidationError("max_length must be positive");
  std::vector<std::string> answers;
  answers.reserve(static_cast<std::size_t>(config.n_samples));
  const std::vector<int> prompt_ids = encode(params.vocab, prompt);

  for (int s = 0; s < config.n_samples; ++s) {
    std::vector<int> context = prompt_ids;
    std::string text;
    for (int step = 0; step < config.max_length; ++step) {
      std::vector<double> dist = next_token_distribution(params, context);
      dist = apply_temperature(dist, config.temperature);
      dist = top_p_filter(dist, config.top_p);
      const double u = rng.next_double();
      double cum = 0.0;
      int picked = -1;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] <= 0.0) continue;
        cum += dist[i];
        picked = static_cast<int>(i);
        if (u < cum) break;
      }
      if (picked < 0) throw NumericError("sampling found no positive-probability token");
      if (picked == params.vocab.eos_id) break;
      if (!text.empty()) text.push_back(' ');
      text += params.vocab.token(picked);
      context.push_back(picked);
    }
    answers.push_back(std::move(text));
  }
  return answers;
}

double sequence_log_prob(const PolicyParams& params, const std::string& prompt,
                         const std::string& answer) {
  const std::vector<int> answer_ids = encode(params.vocab, answer);
  if (answer_ids.empty()) {
    log_warning("sequence_log_prob: empty answer; returning 0 by convention");
    return 0.0;
  }
  std::vector<int> context = encode(params.vocab, prompt);
  double lp = 0.0;
  for (int id : answer_ids) {
    const std::vector<double> dist = next_token_distribution(params, context);
    lp += std::log(std::max(dist[static_cast<std::size_t>(id)], kMinProb));
    context.push_back(id);
  }
  return std::min(lp, 0.0);
}

namespace {

void write_f32(std::ofstream& out, const std::vector<double>& v) {
  for (double x : v) {
    const float f = static_cast<float>(x);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

void read_f32(std::ifstream& in, std::vector<double>& v, std::size_t n,
              const std::filesystem::path& path) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float f = 0.0f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw SchemaError("policy checkpoint truncated: " + path.string());
    v[i] = static_cast<double>(f);
  }
}

}  // namespace

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write policy checkpoint: " + path.string());
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(params.k),
                                   static_cast<std::uint32_t>(params.vocab.size()),
                                   static_cast<std::uint32_t>(params.e),
                                   static_cast<std::uint32_t>(params.h)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  write_f32(out, params.token_embedding.v);
  write_f32(out, params.hidden_weights.v);
  write_f32(out, params.hidden_bias);
  write_f32(out, params.output_weights.v);
  write_f32(out, params.output_bias);
  out.flush();
  if (!out) throw IoError("failed writing policy checkpoint: " + path.string());

  const std::filesystem::path vocab_path = path.string() + ".vocab.jsonl";
  std::ofstream vout(vocab_path, std::ios::binary | std::ios::trunc);
  if (!vout) throw IoError("cannot write vocabulary sidecar: " + vocab_path.string());
  vout << nlohmann::json{{"size", params.vocab.size()},
                         {"unk_id", params.vocab.unk_id},
                         {"eos_id", params.vocab.eos_id},
                         {"pad_id", params.vocab.pad_id}}
              .dump()
       << '\n';
  for (int i = 0; i < params.vocab.size(); ++i) {
    vout << nlohmann::json{{"id", i}, {"token", params.vocab.tokens[static_cast<std::size_t>(i)]}}
                .dump()
         << '\n';
  }
  vout.flush();
  if (!vout) throw IoError("failed writing vocabulary sidecar: " + vocab_path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open policy checkpoint: " + path.string());
  std::uint32_t header[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw SchemaError("policy checkpoint truncated: " + path.string());
  const int k = static_cast<int>(header[0]);
  const int v = static_cast<int>(header[1]);
  const int e = static_cast<int>(header[2]);
  const int h = static_cast<int>(header[3]);
  if (k < 1 || v < 3 || e < 1 || h < 1) {
    throw SchemaError("policy checkpoint has an invalid shape header: " + path.string());
  }

  const std::filesystem::path vocab_path = path.string() + ".vocab.jsonl";
  std::ifstream vin(vocab_path);
  if (!vin) throw IoError("cannot open vocabulary sidecar: " + vocab_path.string());
  std::string line;
  if (!std::getline(vin, line)) {
    throw SchemaError("vocabulary sidecar has no header: " + vocab_path.string());
  }
  Vocabulary vocab;
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    const int size = j.at("size").get<int>();
    vocab.unk_id = j.at("unk_id").get<int>();
    vocab.eos_id = j.at("eos_id").get<int>();
    vocab.pad_id = j.at("pad_id").get<int>();
    vocab.tokens.assign(static_cast<std::size_t>(size), std::string());
    while (std::getline(vin, line)) {
      if (line.empty()) continue;
      const nlohmann::json row = nlohmann::json::parse(line);
      const int id = row.at("id").get<int>();
      if (id < 0 || id >= size) {
        throw SchemaError("vocabulary sidecar has an out-of-range id: " + vocab_path.string());
      }
      vocab.tokens[static_cast<std::size_t>(id)] = row.at("token").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e2) {
    throw SchemaError("vocabulary sidecar " + vocab_path.string() + ": " + e2.what());
  }
  if (static_cast<int>(vocab.tokens.size()) != v) {
    throw SchemaError("vocabulary sidecar size does not match the checkpoint header: " +
                      vocab_path.string());
  }
  vocab.reindex();

  PolicyParams params = make_policy(vocab, k, e, h);
  read_f32(in, params.token_embedding.v, static_cast<std::size_t>(v) * e, path);
  read_f32(in, params.hidden_weights.v, static_cast<std::size_t>(k) * e * h, path);
  read_f32(in, params.hidden_bias, static_cast<std::size_t>(h), path);
  read_f32(in, params.output_weights.v, static_cast<std::size_t>(h) * v, path);
  read_f32(in, params.output_bias, static_cast<std::size_t>(v), path);
  char extra = 0;
  if (in.read(&extra, 1)) {
    throw SchemaError("policy checkpoint has trailing bytes: " + path.string());
  }
  return params;
}

}  // namespace selfrank
