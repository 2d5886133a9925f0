#include "selfrank/reward.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "selfrank/random.hpp"

namespace selfrank {

RewardParams init_reward(int d, int h, std::uint64_t seed) {
  if (d < 1 || h < 1) throw ValidationError("reward model shape values must be positive");
  RewardParams p;
  p.d = d;
  p.h = h;
  p.seed = seed;
  p.hidden_weights = Mat(4 * d, h);
  p.hidden_bias.assign(static_cast<std::size_t>(h), 0.0);
  p.output_weights.assign(static_cast<std::size_t>(h), 0.0);
  p.output_bias = 0.0;
  RngStream rng(seed);
  for (double& x : p.hidden_weights.v) x = rng.uniform(-0.05, 0.05);
  return p;
}

std::vector<double> pair_features(const EmbeddingVector& q, const EmbeddingVector& a) {
  if (q.size() != a.size()) throw DomainError("pair feature dimension mismatch");
  if (q.empty()) throw DomainError("pair features of empty vectors");
  const std::size_t d = q.size();
  std::vector<double> f(4 * d);
  for (std::size_t i = 0; i < d; ++i) {
    f[i] = q[i];
    f[d + i] = a[i];
    f[2 * d + i] = q[i] * a[i];
    f[3 * d + i] = std::abs(q[i] - a[i]);
  }
  return f;
}

namespace {

struct RewardForward {
  std::vector<double> f;  // 4*D features
  std::vector<double> h;  // tanh activations
  double core = 0.0;      // pre-bias score
};

RewardForward forward(const RewardParams& p, const EmbeddingVector& q, const EmbeddingVector& a) {
  if (static_cast<int>(q.size()) != p.d || static_cast<int>(a.size()) != p.d) {
    throw DomainError("embedding dimension does not match the reward model");
  }
  RewardForward fw;
  fw.f = pair_features(q, a);
  fw.h.assign(static_cast<std::size_t>(p.h), 0.0);
  const int fdim = 4 * p.d;
  for (int i = 0; i < fdim; ++i) {
    const double xi = fw.f[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    const double* w = p.hidden_weights.row(i);
    for (int j = 0; j < p.h; ++j) fw.h[static_cast<std::size_t>(j)] += xi * w[j];
  }
  for (int j = 0; j < p.h; ++j) {
    fw.h[static_cast<std::size_t>(j)] =
        std::tanh(fw.h[static_cast<std::size_t>(j)] + p.hidden_bias[static_cast<std::size_t>(j)]);
    fw.core += p.output_weights[static_cast<std::size_t>(j)] * fw.h[static_cast<std::size_t>(j)];
  }
  if (!std::isfinite(fw.core)) throw NumericError("reward score is not finite");
  return fw;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Backpropagates d(loss)/d(core) = g through one forward pass.
void backprop(const RewardParams& p, const RewardForward& fw, double g, RewardGrads& grads) {
  const int fdim = 4 * p.d;
  for (int j = 0; j < p.h; ++j) {
    const double hj = fw.h[static_cast<std::size_t>(j)];
    grads.output_weights[static_cast<std::size_t>(j)] += g * hj;
    const double dpre = g * p.output_weights[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
    grads.hidden_bias[static_cast<std::size_t>(j)] += dpre;
    for (int i = 0; i < fdim; ++i) {
      grads.hidden_weights.at(i, j) += dpre * fw.f[static_cast<std::size_t>(i)];
    }
  }
  grads.output_bias += 0.0;  // the bias cancels in every pair difference
}

}  // namespace

double reward_score(const RewardParams& params, const EmbeddingVector& q,
                    const EmbeddingVector& a) {
  return forward(params, q, a).core + params.output_bias;
}

double pair_probability(const RewardParams& params, const EmbeddingVector& q,
                        const EmbeddingVector& winner, const EmbeddingVector& loser) {
  const double diff = forward(params, q, winner).core - forward(params, q, loser).core;
  return sigmoid(diff);
}

double reward_loss(const RewardParams& params, const std::vector<PairExample>& batch) {
  if (batch.empty()) throw ValidationError("reward loss of an empty batch");
  double total = 0.0;
  for (const PairExample& ex : batch) {
    const double diff = forward(params, ex.question, ex.winner).core -
                        forward(params, ex.question, ex.loser).core;
    total += softplus(-diff);  // == -log sigmoid(diff)
  }
  const double loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("reward loss is not finite");
  return loss;
}

RewardGrads::RewardGrads(const RewardParams& p)
    : hidden_weights(p.hidden_weights.rows, p.hidden_weights.cols),
      hidden_bias(p.hidden_bias.size(), 0.0),
      output_weights(p.output_weights.size(), 0.0) {}

RewardGrads reward_loss_gradient(const RewardParams& params,
                                 const std::vector<PairExample>& batch, double* loss_out) {
  if (batch.empty()) throw ValidationError("reward gradient of an empty batch");
  RewardGrads grads(params);
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const PairExample& ex : batch) {
    const RewardForward fw_w = forward(params, ex.question, ex.winner);
    const RewardForward fw_l = forward(params, ex.question, ex.loser);
    const double diff = fw_w.core - fw_l.core;
    total += softplus(-diff);
    const double g = (sigmoid(diff) - 1.0) * inv;  // d(mean loss)/d(diff)
    backprop(params, fw_w, g, grads);
    backprop(params, fw_l, -g, grads);
  }
  if (loss_out) *loss_out = total * inv;
  return grads;
}

RewardParams train_reward(const std::vector<PairExample>& pairs, int d,
                          const RewardTrainConfig& config, std::vector<double>* epoch_losses) {
  if (pairs.empty()) throw ValidationError("no pairs to train the reward model on");
  if (config.batch_size < 1) throw ValidationError("batch size must be positive");
  if (config.lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (config.epochs < 0) throw ValidationError("epochs must be nonnegative");

  RewardParams params = init_reward(d, 64, config.seed);
  RewardGrads m(params), v(params);  // Adam first/second moments
  std::int64_t step = 0;

  RngStream shuffle_rng(derive_seed(config.seed, "reward-shuffle", ""));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_index(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<PairExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);

      double loss = 0.0;
      const RewardGrads g = reward_loss_gradient(params, batch, &loss);
      if (!std::isfinite(loss)) {
        throw NumericError("reward training diverged: non-finite loss at epoch " +
                           std::to_string(epoch + 1));
      }
      epoch_total += loss;
      ++batches;
      ++step;

      const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      auto adam = [&](double grad, double& m1, double& m2, double& param, bool decay) {
        m1 = config.adam_beta1 * m1 + (1.0 - config.adam_beta1) * grad;
        m2 = config.adam_beta2 * m2 + (1.0 - config.adam_beta2) * grad * grad;
        const double mh = m1 / bc1;
        const double vh = m2 / bc2;
        param -= config.lr * mh / (std::sqrt(vh) + config.adam_eps);
        if (decay) param -= config.lr * config.weight_decay * param;
      };
      for (std::size_t i = 0; i < params.hidden_weights.v.size(); ++i) {
        adam(g.hidden_weights.v[i], m.hidden_weights.v[i], v.hidden_weights.v[i],
             params.hidden_weights.v[i], true);
      }
      for (std::size_t i = 0; i < params.hidden_bias.size(); ++i) {
        adam(g.hidden_bias[i], m.hidden_bias[i], v.hidden_bias[i], params.hidden_bias[i], false);
      }
      for (std::size_t i = 0; i < params.output_weights.size(); ++i) {
        adam(g.output_weights[i], m.output_weights[i], v.output_weights[i],
             params.output_weights[i], true);
      }
      adam(g.output_bias, m.output_bias, v.output_bias, params.output_bias, false);
    }
    if (epoch_losses) epoch_losses->push_back(epoch_total / static_cast<double>(batches));
  }
  return params;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void write_f32(std::ofstream& out, const std::vector<double>& vals) {
  for (double x : vals) {
    const float f = static_cast<float>(x);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

void read_f32(std::ifstream& in, std::vector<double>& vals, std::size_t n,
              const std::filesystem::path& path) {
  vals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float f = 0.0f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw SchemaError("reward checkpoint truncated: " + path.string());
    vals[i] = static_cast<double>(f);
  }
}

}  // namespace

void save_reward(const RewardParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write reward checkpoint: " + path.string());
  out << nlohmann::json{{"d", params.d}, {"h", params.h}, {"seed", params.seed}}.dump() << '\n';
  write_f32(out, params.hidden_weights.v);
  write_f32(out, params.hidden_bias);
  write_f32(out, params.output_weights);
  write_f32(out, {params.output_bias});
  out.flush();
  if (!out) throw IoError("failed writing reward checkpoint: " + path.string());
}

RewardParams load_reward(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open reward checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("reward checkpoint has no header: " + path.string());
  RewardParams params;
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    params.d = j.at("d").get<int>();
    params.h = j.at("h").get<int>();
    params.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("reward checkpoint " + path.string() + " header: " + e.what());
  }
  if (params.d < 1 || params.h < 1) {
    throw SchemaError("reward checkpoint has an invalid shape header: " + path.string());
  }
  params.hidden_weights = Mat(4 * params.d, params.h);
  read_f32(in, params.hidden_weights.v, params.hidden_weights.v.size(), path);
  read_f32(in, params.hidden_bias, static_cast<std::size_t>(params.h), path);
  read_f32(in, params.output_weights, static_cast<std::size_t>(params.h), path);
  std::vector<double> bias;
  read_f32(in, bias, 1, path);
  params.output_bias = bias[0];
  char extra = 0;
  if (in.read(&extra, 1)) {
    throw SchemaError("reward checkpoint has trailing bytes: " + path.string());
  }
  return params;
}

}  // namespace selfrank
