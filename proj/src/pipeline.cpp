#include "selfrank/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "selfrank/eval.hpp"

namespace selfrank {

void to_json(nlohmann::json& j, const GeneratedRow& r) {
  j = nlohmann::json{{"qid", r.qid}, {"sample_index", r.sample_index}, {"text", r.text}};
}
void from_json(const nlohmann::json& j, GeneratedRow& r) {
  j.at("qid").get_to(r.qid);
  j.at("sample_index").get_to(r.sample_index);
  j.at("text").get_to(r.text);
}

void to_json(nlohmann::json& j, const RankedRow& r) {
  j = nlohmann::json{{"qid", r.qid},
                     {"rank", r.rank},
                     {"answer_id", r.answer_id},
                     {"text", r.text},
                     {"weight", r.weight}};
}
void from_json(const nlohmann::json& j, RankedRow& r) {
  j.at("qid").get_to(r.qid);
  j.at("rank").get_to(r.rank);
  j.at("answer_id").get_to(r.answer_id);
  j.at("text").get_to(r.text);
  j.at("weight").get_to(r.weight);
}

void to_json(nlohmann::json& j, const ClusterRow& r) {
  j = nlohmann::json{{"qid", r.qid},
                     {"answer_id", r.answer_id},
                     {"cluster", r.cluster},
                     {"is_representative", r.is_representative}};
}
void from_json(const nlohmann::json& j, ClusterRow& r) {
  j.at("qid").get_to(r.qid);
  j.at("answer_id").get_to(r.answer_id);
  j.at("cluster").get_to(r.cluster);
  j.at("is_representative").get_to(r.is_representative);
}

void to_json(nlohmann::json& j, const PairRow& r) {
  j = nlohmann::json{{"qid", r.qid},     {"winner", r.winner}, {"loser", r.loser},
                     {"w_rank", r.w_rank}, {"l_rank", r.l_rank}, {"noise", r.noise}};
}
void from_json(const nlohmann::json& j, PairRow& r) {
  j.at("qid").get_to(r.qid);
  j.at("winner").get_to(r.winner);
  j.at("loser").get_to(r.loser);
  j.at("w_rank").get_to(r.w_rank);
  j.at("l_rank").get_to(r.l_rank);
  j.at("noise").get_to(r.noise);
}

void to_json(nlohmann::json& j, const PPOLogEntry& r) {
  j = nlohmann::json{{"step", r.step},
                     {"mean_reward", r.mean_reward},
                     {"mean_kl", r.mean_kl},
                     {"objective", r.objective}};
}
void from_json(const nlohmann::json& j, PPOLogEntry& r) {
  j.at("step").get_to(r.step);
  j.at("mean_reward").get_to(r.mean_reward);
  j.at("mean_kl").get_to(r.mean_kl);
  j.at("objective").get_to(r.objective);
}

namespace {

std::string stage_file_name(const std::string& stage) {
  if (stage == "sft") return "policy_sft.bin";
  if (stage == "generate") return "generated.jsonl";
  if (stage == "rank") return "ranked.jsonl";
  if (stage == "cluster") return "clusters.jsonl";
  if (stage == "pair") return "pairs.jsonl";
  if (stage == "train-reward") return "reward.bin";
  if (stage == "ppo") return "ppo_log.jsonl";
  if (stage == "eval") return "eval_report.json";
  if (stage == "project") return "projection.csv";
  throw ConfigError("unknown stage: " + stage);
}

std::filesystem::path ppo_policy_path(const PipelineConfig& config) {
  return std::filesystem::path(config.out_dir) / "policy_ppo.bin";
}

// Shortest round-trip decimal form, shared with the JSON artifacts so every
// emitted number is format-stable.
std::string format_number(double x) { return nlohmann::json(x).dump(); }

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void require_artifact(const std::string& consumer, const std::string& producer,
                      const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw ValidationError("stage \"" + consumer + "\" requires the output of stage \"" +
                          producer + "\" (" + file.string() + " not found); run \"" + producer +
                          "\" first");
  }
}

void require_stage_output(const PipelineConfig& config, const std::string& consumer,
                          const std::string& producer) {
  require_artifact(consumer, producer, artifact_path(config, producer));
}

// Text embedding front end for the stages. "hash" computes (and caches)
// trigram-hash vectors from the texts themselves; "file:<path>" serves
// precomputed vectors looked up by answer id, which only works for stages
// whose inputs were embedded ahead of time (rank, cluster, project).
class Embedder {
 public:
  Embedder(const PipelineConfig& config, const std::string& stage) : config_(config) {
    if (config.embedder == "hash") return;
    const std::string prefix = "file:";
    file_mode_ = true;
    matrix_ = load_embeddings(config.embedder.substr(prefix.size()));
    if (stage == "train-reward" || stage == "ppo") {
      throw ConfigError(
          "embedder \"" + config.embedder + "\" cannot serve stage \"" + stage +
          "\": that stage embeds newly created texts with no precomputed vectors; use "
          "embedder = \"hash\"");
    }
  }

  bool file_mode() const { return file_mode_; }
  int dim() const { return file_mode_ ? matrix_.dim() : config_.embedding_dim; }

  EmbeddingVector by_text(const std::string& text) {
    const auto it = cache_.find(text);
    if (it != cache_.end()) return it->second;
    EmbeddingVector v = hash_embed(text, config_.embedding_dim);
    cache_.emplace(text, v);
    return v;
  }

  EmbeddingVector for_answer(const std::string& answer_id, const std::string& text) {
    if (!file_mode_) return by_text(text);
    const double* row = matrix_.row_for(answer_id);
    return EmbeddingVector(row, row + matrix_.dim());
  }

 private:
  const PipelineConfig& config_;
  bool file_mode_ = false;
  EmbeddingMatrix matrix_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

template <typename Row>
std::vector<std::pair<std::string, std::vector<Row>>> group_by_qid(const std::vector<Row>& rows) {
  std::vector<std::pair<std::string, std::vector<Row>>> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const Row& r : rows) {
    const auto it = index.find(r.qid);
    if (it == index.end()) {
      index.emplace(r.qid, groups.size());
      groups.push_back({r.qid, {r}});
    } else {
      groups[it->second].second.push_back(r);
    }
  }
  return groups;
}

std::vector<QARecord> records_of_split(const std::vector<QARecord>& all, Split split) {
  std::vector<QARecord> out;
  for (const QARecord& r : all) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::unordered_map<std::string, QARecord> index_dataset(const std::vector<QARecord>& all) {
  std::unordered_map<std::string, QARecord> out;
  for (const QARecord& r : all) out.emplace(r.id, r);
  return out;
}

const QARecord& record_for_qid(const std::unordered_map<std::string, QARecord>& index,
                               const std::string& qid) {
  const auto it = index.find(qid);
  if (it == index.end()) {
    throw ValidationError("artifact references qid \"" + qid + "\" absent from the dataset");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// stages

std::filesystem::path stage_sft(const PipelineConfig& config) {
  const std::vector<QARecord> all = load_dataset(config.dataset_path);
  const std::vector<QARecord> train = records_of_split(all, Split::train);
  if (train.empty()) throw ValidationError("corpus empty");

  const Vocabulary vocab = build_vocabulary(train, config.vocab_size);
  PolicyParams params = make_policy(vocab, config.context_window, config.policy_embedding_dim,
                                    config.policy_hidden_dim);
  RngStream init = derive_stream(config.seed, "sft", "");
  randomize_policy(params, init, config.init_scale);
  train_sft(params, train, config.prompt_template, config.sft_epochs, config.sft_lr);

  const std::filesystem::path path = artifact_path(config, "sft");
  save_policy(params, path);
  return path;
}

std::filesystem::path stage_generate(const PipelineConfig& config) {
  require_stage_output(config, "generate", "sft");
  const PolicyParams params = load_policy(artifact_path(config, "sft"));
  const std::vector<QARecord> train =
      records_of_split(load_dataset(config.dataset_path), Split::train);
  if (train.empty()) throw ValidationError("corpus empty");

  std::vector<GeneratedRow> rows;
  for (const QARecord& r : train) {
    RngStream rng = derive_stream(config.seed, "generate", r.id);
    const std::string prompt = apply_prompt(config.prompt_template, r.question);
    const std::vector<std::string> answers = sample_answers(params, prompt, config.decode, rng);
    for (std::size_t i = 0; i < answers.size(); ++i) {
      rows.push_back({r.id, static_cast<int>(i), answers[i]});
    }
  }
  return save_stage(artifact_path(config, "generate"), "generate", config.seed, rows);
}

std::string answer_id_of(const std::string& qid, int sample_index) {
  return qid + "#" + std::to_string(sample_index);
}

std::filesystem::path stage_rank(const PipelineConfig& config) {
  require_stage_output(config, "rank", "generate");
  const auto generated =
      load_stage<GeneratedRow>(artifact_path(config, "generate"), "generate");
  Embedder embedder(config, "rank");

  std::vector<RankedRow> out;
  for (const auto& [qid, rows] : group_by_qid(generated)) {
    std::vector<std::pair<std::string, std::string>> answers;
    EmbeddingMatrix emb;
    emb.rows = Mat(static_cast<int>(rows.size()), embedder.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string id = answer_id_of(qid, rows[i].sample_index);
      answers.push_back({id, rows[i].text});
      emb.row_ids.push_back(id);
      const EmbeddingVector v = embedder.for_answer(id, rows[i].text);
      if (static_cast<int>(v.size()) != emb.dim()) {
        throw SchemaError("embedding for \"" + id + "\" has dimension " +
                          std::to_string(v.size()) + ", expected " + std::to_string(emb.dim()));
      }
      std::copy(v.begin(), v.end(), emb.rows.row(static_cast<int>(i)));
    }
    const RankedAnswerList ranked = rank_answers(answers, emb, config.damping, config.tol,
                                                 config.max_iter, config.min_similarity);
    for (std::size_t p = 0; p < ranked.size(); ++p) {
      out.push_back({qid, static_cast<int>(p) + 1, ranked[p].answer_id, ranked[p].text,
                     ranked[p].weight});
    }
  }
  return save_stage(artifact_path(config, "rank"), "rank", config.seed, out);
}

std::filesystem::path stage_cluster(const PipelineConfig& config) {
  require_stage_output(config, "cluster", "rank");
  const auto ranked_rows = load_stage<RankedRow>(artifact_path(config, "rank"), "rank");
  Embedder embedder(config, "cluster");

  std::vector<ClusterRow> out;
  for (const auto& [qid, rows] : group_by_qid(ranked_rows)) {
    RankedAnswerList ranked;
    EmbeddingMatrix emb;
    emb.rows = Mat(static_cast<int>(rows.size()), embedder.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ranked.push_back({rows[i].answer_id, rows[i].text, rows[i].weight});
      emb.row_ids.push_back(rows[i].answer_id);
      const EmbeddingVector v = embedder.for_answer(rows[i].answer_id, rows[i].text);
      std::copy(v.begin(), v.end(), emb.rows.row(static_cast<int>(i)));
    }
    RngStream rng = derive_stream(config.seed, "cluster", qid);
    const ClusterResult result = isodata(emb, config.isodata, rng);
    const RankedAnswerList reps = select_representatives(ranked, result, config.representative);
    std::unordered_set<std::string> rep_ids;
    for (const RankedAnswer& r : reps) rep_ids.insert(r.answer_id);
    for (const RankedRow& r : rows) {
      out.push_back({qid, r.answer_id, result.cluster_of(r.answer_id),
                     rep_ids.count(r.answer_id) > 0});
    }
  }
  return save_stage(artifact_path(config, "cluster"), "cluster", config.seed, out);
}

std::filesystem::path stage_pair(const PipelineConfig& config) {
  require_stage_output(config, "pair", "cluster");
  require_stage_output(config, "pair", "rank");
  const auto cluster_rows = load_stage<ClusterRow>(artifact_path(config, "cluster"), "cluster");
  const auto ranked_rows = load_stage<RankedRow>(artifact_path(config, "rank"), "rank");
  const std::vector<QARecord> all = load_dataset(config.dataset_path);
  const auto dataset_index = index_dataset(all);

  // In-distribution token pools for the n-gram edits, one per dataset split,
  // built from questions and reference answers in file order.
  std::map<Split, std::vector<std::string>> pools;
  const auto pool_for = [&](Split split) -> const std::vector<std::string>& {
    auto it = pools.find(split);
    if (it == pools.end()) {
      std::vector<std::string> pool;
      for (const QARecord& r : all) {
        if (r.split != split) continue;
        for (auto& t : tokenize(r.question)) pool.push_back(std::move(t));
        for (auto& t : tokenize(r.reference_answer)) pool.push_back(std::move(t));
      }
      it = pools.emplace(split, std::move(pool)).first;
    }
    return it->second;
  };

  std::unordered_map<std::string, std::vector<RankedRow>> ranked_by_qid;
  for (const auto& [qid, rows] : group_by_qid(ranked_rows)) ranked_by_qid.emplace(qid, rows);

  std::vector<PairRow> out;
  for (const auto& [qid, rows] : group_by_qid(cluster_rows)) {
    const auto rit = ranked_by_qid.find(qid);
    if (rit == ranked_by_qid.end()) {
      throw ValidationError("qid \"" + qid + "\" appears in the cluster artifact but not the "
                            "ranked artifact; rerun the rank and cluster stages together");
    }
    std::unordered_set<std::string> rep_ids;
    for (const ClusterRow& r : rows) {
      if (r.is_representative) rep_ids.insert(r.answer_id);
    }
    RankedAnswerList filtered;
    for (const RankedRow& r : rit->second) {
      if (rep_ids.count(r.answer_id) > 0) filtered.push_back({r.answer_id, r.text, r.weight});
    }
    const std::optional<int> cap =
        config.pair_cap > 0 ? std::optional<int>(config.pair_cap) : std::nullopt;
    std::vector<AnswerPair> pairs = build_pairs(qid, filtered, config.interval_length, cap);
    RngStream rng = derive_stream(config.seed, "pair", qid);
    const Split split = record_for_qid(dataset_index, qid).split;
    pairs = make_training_set(std::move(pairs), config.noise, pool_for(split), rng);
    for (const AnswerPair& p : pairs) {
      out.push_back({p.qid, p.winner_text, p.loser_text, p.winner_rank, p.loser_rank,
                     to_string(p.noise_applied)});
    }
  }
  return save_stage(artifact_path(config, "pair"), "pair", config.seed, out);
}

std::filesystem::path stage_train_reward(const PipelineConfig& config) {
  require_stage_output(config, "train-reward", "pair");
  Embedder embedder(config, "train-reward");
  const auto pair_rows = load_stage<PairRow>(artifact_path(config, "pair"), "pair");
  if (pair_rows.empty()) {
    throw ValidationError("pair artifact holds no training pairs; loosen interval_length or "
                          "clustering so at least one pair survives");
  }
  const auto dataset_index = index_dataset(load_dataset(config.dataset_path));

  std::vector<PairExample> examples;
  examples.reserve(pair_rows.size());
  for (const PairRow& row : pair_rows) {
    const QARecord& record = record_for_qid(dataset_index, row.qid);
    examples.push_back({embedder.by_text(record.question), embedder.by_text(row.winner),
                        embedder.by_text(row.loser)});
  }

  RewardTrainConfig rc = config.reward;
  rc.seed = derive_seed(config.seed, "train-reward", "");
  const RewardParams params = train_reward(examples, embedder.dim(), rc);
  const std::filesystem::path path = artifact_path(config, "train-reward");
  save_reward(params, path);
  return path;
}

std::filesystem::path stage_ppo(const PipelineConfig& config) {
  require_stage_output(config, "ppo", "train-reward");
  require_stage_output(config, "ppo", "sft");
  Embedder embedder(config, "ppo");
  const RewardParams reward = load_reward(artifact_path(config, "train-reward"));
  if (reward.d != embedder.dim()) {
    throw ConfigError("reward checkpoint dimension " + std::to_string(reward.d) +
                      " does not match embedding.dim " + std::to_string(embedder.dim()));
  }
  PolicyParams policy = load_policy(artifact_path(config, "sft"));
  const PolicyParams snapshot = policy;

  const std::vector<QARecord> train =
      records_of_split(load_dataset(config.dataset_path), Split::train);
  if (train.empty()) throw ValidationError("corpus empty");
  std::vector<PromptItem> items;
  for (const QARecord& r : train) {
    items.push_back({r.id, r.question, apply_prompt(config.prompt_template, r.question)});
  }

  const RewardFn reward_fn = [&](const std::string& question, const std::string& answer) {
    return reward_score(reward, embedder.by_text(question), embedder.by_text(answer));
  };

  PPOConfig pc = config.ppo;
  pc.seed = derive_seed(config.seed, "ppo", "");
  pc.max_length = config.decode.max_length;
  const std::vector<PPOLogEntry> log = run_ppo(policy, snapshot, reward_fn, items, pc);

  save_policy(policy, ppo_policy_path(config));
  return save_stage(artifact_path(config, "ppo"), "ppo", config.seed, log);
}

std::filesystem::path stage_eval(const PipelineConfig& config) {
  require_artifact("eval", "ppo", ppo_policy_path(config));
  const PolicyParams policy = load_policy(ppo_policy_path(config));
  const std::vector<QARecord> test =
      records_of_split(load_dataset(config.dataset_path), Split::test);
  if (test.empty()) throw ValidationError("no records in split \"test\" to evaluate");

  std::map<std::string, std::vector<double>> values;
  DecodeConfig decode = config.decode;
  decode.n_samples = 1;
  for (const QARecord& r : test) {
    RngStream rng = derive_stream(config.seed, "eval", r.id);
    const std::string prompt = apply_prompt(config.prompt_template, r.question);
    const std::string candidate = sample_answers(policy, prompt, decode, rng).front();

    const std::vector<std::string> cand_tokens = tokenize(candidate);
    const std::vector<std::string> ref_tokens = tokenize(r.reference_answer);
    const bool degenerate = cand_tokens.empty() || ref_tokens.empty();
    values["bleu4"].push_back(degenerate ? 0.0 : bleu4(cand_tokens, {ref_tokens}));
    values["gleu-ngram"].push_back(degenerate ? 0.0 : gleu(cand_tokens, ref_tokens));
    values["meteor-exact"].push_back(degenerate ? 0.0 : meteor_exact(cand_tokens, ref_tokens));
    values["em"].push_back(static_cast<double>(exact_match(candidate, r.reference_answer)));
    const PRF prf = token_prf(candidate, r.reference_answer);
    values["precision"].push_back(prf.precision);
    values["recall"].push_back(prf.recall);
    values["f1"].push_back(prf.f1);
  }

  nlohmann::json report = nlohmann::json::object();
  for (const auto& [metric, samples] : values) {
    const MetricSummary s = eval_report(samples);
    report[metric] = {{"mean", s.mean}, {"ci95", s.ci95}, {"n", s.n}};
  }
  const std::filesystem::path path = artifact_path(config, "eval");
  std::ofstream out = detail::open_artifact_for_write(path);
  out << report.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing artifact: " + path.string());
  return path;
}

std::filesystem::path stage_project(const PipelineConfig& config) {
  require_stage_output(config, "project", "cluster");
  require_stage_output(config, "project", "generate");
  const auto cluster_rows = load_stage<ClusterRow>(artifact_path(config, "cluster"), "cluster");
  const auto generated =
      load_stage<GeneratedRow>(artifact_path(config, "generate"), "generate");
  Embedder embedder(config, "project");

  std::unordered_map<std::string, int> cluster_of;
  for (const ClusterRow& r : cluster_rows) cluster_of.emplace(r.answer_id, r.cluster);

  EmbeddingMatrix emb;
  emb.rows = Mat(static_cast<int>(generated.size()), embedder.dim());
  std::vector<int> clusters;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const std::string id = answer_id_of(generated[i].qid, generated[i].sample_index);
    const auto it = cluster_of.find(id);
    if (it == cluster_of.end()) {
      throw ValidationError("answer \"" + id + "\" is missing from the cluster artifact; rerun "
                            "the cluster stage");
    }
    clusters.push_back(it->second);
    emb.row_ids.push_back(id);
    const EmbeddingVector v = embedder.for_answer(id, generated[i].text);
    std::copy(v.begin(), v.end(), emb.rows.row(static_cast<int>(i)));
  }

  const Projection proj = project_2d(emb);
  const std::filesystem::path path = artifact_path(config, "project");
  std::ofstream out = detail::open_artifact_for_write(path);
  out << "x,y,answer_id,cluster\n";
  for (int i = 0; i < emb.size(); ++i) {
    out << format_number(proj.points.at(i, 0)) << ',' << format_number(proj.points.at(i, 1))
        << ',' << csv_field(emb.row_ids[static_cast<std::size_t>(i)]) << ','
        << clusters[static_cast<std::size_t>(i)] << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing artifact: " + path.string());
  return path;
}

// ---------------------------------------------------------------------------
// manifest

RunManifest manifest_or_fresh(const std::filesystem::path& out_dir) {
  const std::filesystem::path path = out_dir / "manifest.json";
  if (!std::filesystem::exists(path)) return RunManifest{};
  try {
    return load_manifest(out_dir);
  } catch (const Error&) {
    return RunManifest{};  // unreadable manifest: rebuild from scratch
  }
}

void update_manifest(const PipelineConfig& config, const std::string& stage,
                     const std::filesystem::path& artifact) {
  const std::filesystem::path out_dir(config.out_dir);
  RunManifest m = manifest_or_fresh(out_dir);
  const std::string digest = config_digest(config);
  if (m.master_seed != config.seed || m.config_digest != digest) {
    m.stage_outputs.clear();  // artifacts of another configuration
  }
  m.master_seed = config.seed;
  m.config_digest = digest;
  m.stage_outputs[stage] = artifact.filename().string();
  m.created_at = utc_now();
  for (auto it = m.stage_outputs.begin(); it != m.stage_outputs.end();) {
    if (std::filesystem::exists(out_dir / it->second)) ++it;
    else it = m.stage_outputs.erase(it);
  }

  nlohmann::json j{{"master_seed", m.master_seed},
                   {"config_digest", m.config_digest},
                   {"stage_outputs", m.stage_outputs},
                   {"created_at", m.created_at}};
  std::ofstream out = detail::open_artifact_for_write(out_dir / "manifest.json");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("failed writing manifest: " + (out_dir / "manifest.json").string());
}

}  // namespace

RunManifest load_manifest(const std::filesystem::path& out_dir) {
  const std::filesystem::path path = out_dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  RunManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    for (const auto& [stage, file] : j.at("stage_outputs").items()) {
      m.stage_outputs[stage] = file.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

std::filesystem::path artifact_path(const PipelineConfig& config, const std::string& stage) {
  return std::filesystem::path(config.out_dir) / stage_file_name(stage);
}

std::filesystem::path run_stage(const std::string& stage, const PipelineConfig& config) {
  if (!is_stage_name(stage)) throw ConfigError("unknown stage: " + stage);
  validate_config(config);
  std::filesystem::create_directories(config.out_dir);

  std::filesystem::path artifact;
  if (stage == "sft") artifact = stage_sft(config);
  else if (stage == "generate") artifact = stage_generate(config);
  else if (stage == "rank") artifact = stage_rank(config);
  else if (stage == "cluster") artifact = stage_cluster(config);
  else if (stage == "pair") artifact = stage_pair(config);
  else if (stage == "train-reward") artifact = stage_train_reward(config);
  else if (stage == "ppo") artifact = stage_ppo(config);
  else if (stage == "eval") artifact = stage_eval(config);
  else artifact = stage_project(config);

  update_manifest(config, stage, artifact);
  return artifact;
}

RunManifest run_all(const PipelineConfig& config) {
  for (const std::string& stage : stage_names()) run_stage(stage, config);
  return load_manifest(config.out_dir);
}

// ---------------------------------------------------------------------------
// configuration

namespace {

const std::vector<std::string>& allowed_config_keys() {
  static const std::vector<std::string> keys = {
      "run.seed",
      "run.out",
      "run.jobs",
      "dataset.path",
      "dataset.prompt_template",
      "embedding.embedder",
      "embedding.dim",
      "policy.context_window",
      "policy.embedding_dim",
      "policy.hidden_dim",
      "policy.vocab_size",
      "policy.init_scale",
      "sft.epochs",
      "sft.lr",
      "generate.temperature",
      "generate.top_p",
      "generate.max_length",
      "generate.n_samples",
      "rank.damping",
      "rank.tol",
      "rank.max_iter",
      "rank.min_similarity",
      "cluster.k_init",
      "cluster.min_cluster_size",
      "cluster.max_cluster_size",
      "cluster.variance_threshold",
      "cluster.max_rounds",
      "cluster.representative",
      "pair.interval_length",
      "pair.injection_probability",
      "pair.max_ngram",
      "pair.cap",
      "reward.batch_size",
      "reward.lr",
      "reward.epochs",
      "reward.weight_decay",
      "ppo.beta",
      "ppo.steps",
      "ppo.rollouts_per_step",
      "ppo.lr",
      "ppo.baseline_decay",
      "ppo.clip_epsilon",
  };
  return keys;
}

int get_checked_int(const ConfigTable& t, const std::string& key, int fallback) {
  const std::int64_t v = t.get_int(key, fallback);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("value out of range for " + key);
  return static_cast<int>(v);
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  PipelineConfig c;
  if (path.empty()) return c;
  const ConfigTable t = ConfigTable::parse_file(path);

  const auto& allowed = allowed_config_keys();
  for (const std::string& key : t.keys()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(path + ": unknown config key: " + key);
    }
  }

  c.seed = static_cast<std::uint64_t>(t.get_int("run.seed", static_cast<std::int64_t>(c.seed)));
  c.out_dir = t.get_string("run.out", c.out_dir);
  c.jobs = get_checked_int(t, "run.jobs", c.jobs);
  c.dataset_path = t.get_string("dataset.path", c.dataset_path);
  c.prompt_template = t.get_string("dataset.prompt_template", c.prompt_template);
  c.embedder = t.get_string("embedding.embedder", c.embedder);
  c.embedding_dim = get_checked_int(t, "embedding.dim", c.embedding_dim);
  c.context_window = get_checked_int(t, "policy.context_window", c.context_window);
  c.policy_embedding_dim = get_checked_int(t, "policy.embedding_dim", c.policy_embedding_dim);
  c.policy_hidden_dim = get_checked_int(t, "policy.hidden_dim", c.policy_hidden_dim);
  c.vocab_size = get_checked_int(t, "policy.vocab_size", c.vocab_size);
  c.init_scale = t.get_double("policy.init_scale", c.init_scale);
  c.sft_epochs = get_checked_int(t, "sft.epochs", c.sft_epochs);
  c.sft_lr = t.get_double("sft.lr", c.sft_lr);
  c.decode.temperature = t.get_double("generate.temperature", c.decode.temperature);
  c.decode.top_p = t.get_double("generate.top_p", c.decode.top_p);
  c.decode.max_length = get_checked_int(t, "generate.max_length", c.decode.max_length);
  c.decode.n_samples = get_checked_int(t, "generate.n_samples", c.decode.n_samples);
  c.damping = t.get_double("rank.damping", c.damping);
  c.tol = t.get_double("rank.tol", c.tol);
  c.max_iter = get_checked_int(t, "rank.max_iter", c.max_iter);
  c.min_similarity = t.get_double("rank.min_similarity", c.min_similarity);
  c.isodata.k_init = get_checked_int(t, "cluster.k_init", c.isodata.k_init);
  c.isodata.min_cluster_size =
      get_checked_int(t, "cluster.min_cluster_size", c.isodata.min_cluster_size);
  c.isodata.max_cluster_size =
      get_checked_int(t, "cluster.max_cluster_size", c.isodata.max_cluster_size);
  c.isodata.variance_threshold =
      t.get_double("cluster.variance_threshold", c.isodata.variance_threshold);
  c.isodata.max_rounds = get_checked_int(t, "cluster.max_rounds", c.isodata.max_rounds);
  const std::string rep = t.get_string("cluster.representative", "medoid");
  if (rep == "medoid") c.representative = RepresentativePolicy::medoid;
  else if (rep == "top-weight") c.representative = RepresentativePolicy::top_weight;
  else throw ConfigError("cluster.representative must be \"medoid\" or \"top-weight\"");
  c.interval_length = get_checked_int(t, "pair.interval_length", c.interval_length);
  c.noise.injection_probability =
      t.get_double("pair.injection_probability", c.noise.injection_probability);
  c.noise.max_ngram = get_checked_int(t, "pair.max_ngram", c.noise.max_ngram);
  c.pair_cap = get_checked_int(t, "pair.cap", c.pair_cap);
  c.reward.batch_size = get_checked_int(t, "reward.batch_size", c.reward.batch_size);
  c.reward.lr = t.get_double("reward.lr", c.reward.lr);
  c.reward.epochs = get_checked_int(t, "reward.epochs", c.reward.epochs);
  c.reward.weight_decay = t.get_double("reward.weight_decay", c.reward.weight_decay);
  c.ppo.beta = t.get_double("ppo.beta", c.ppo.beta);
  c.ppo.steps = get_checked_int(t, "ppo.steps", c.ppo.steps);
  c.ppo.rollouts_per_step = get_checked_int(t, "ppo.rollouts_per_step", c.ppo.rollouts_per_step);
  c.ppo.lr = t.get_double("ppo.lr", c.ppo.lr);
  c.ppo.baseline_decay = t.get_double("ppo.baseline_decay", c.ppo.baseline_decay);
  c.ppo.clip_epsilon = t.get_double("ppo.clip_epsilon", c.ppo.clip_epsilon);
  return c;
}

void validate_config(const PipelineConfig& c) {
  const auto bad = [](const std::string& what) { throw ConfigError(what); };
  if (c.dataset_path.empty()) bad("dataset.path is not set");
  if (c.out_dir.empty()) bad("run.out is empty");
  if (c.jobs < 1) bad("run.jobs must be >= 1");
  if (c.embedder != "hash" &&
      (c.embedder.rfind("file:", 0) != 0 || c.embedder.size() <= 5)) {
    bad("embedding.embedder must be \"hash\" or \"file:<path>\"");
  }
  if (c.embedding_dim < 2) bad("embedding.dim must be >= 2");
  if (c.context_window < 1) bad("policy.context_window must be >= 1");
  if (c.policy_embedding_dim < 1) bad("policy.embedding_dim must be >= 1");
  if (c.policy_hidden_dim < 1) bad("policy.hidden_dim must be >= 1");
  if (c.vocab_size < 1) bad("policy.vocab_size must be >= 1");
  if (!(c.init_scale > 0.0)) bad("policy.init_scale must be > 0");
  if (c.sft_epochs < 0) bad("sft.epochs must be >= 0");
  if (!(c.sft_lr > 0.0)) bad("sft.lr must be > 0");
  if (!(c.decode.temperature > 0.0)) bad("generate.temperature must be > 0");
  if (!(c.decode.top_p > 0.0 && c.decode.top_p <= 1.0)) {
    bad("generate.top_p must be in (0, 1]");
  }
  if (c.decode.max_length < 1) bad("generate.max_length must be >= 1");
  if (c.decode.n_samples < 1) bad("generate.n_samples must be >= 1");
  if (!(c.damping > 0.0 && c.damping < 1.0)) bad("rank.damping must be in (0, 1)");
  if (!(c.tol > 0.0)) bad("rank.tol must be > 0");
  if (c.max_iter < 1) bad("rank.max_iter must be >= 1");
  if (c.min_similarity < 0.0) bad("rank.min_similarity must be >= 0");
  if (c.isodata.k_init < 1) bad("cluster.k_init must be >= 1");
  if (c.isodata.min_cluster_size < 1) bad("cluster.min_cluster_size must be >= 1");
  if (c.isodata.min_cluster_size > c.isodata.max_cluster_size) {
    bad("cluster.min_cluster_size must be <= cluster.max_cluster_size");
  }
  if (!(c.isodata.variance_threshold > 0.0)) bad("cluster.variance_threshold must be > 0");
  if (c.isodata.max_rounds < 1) bad("cluster.max_rounds must be >= 1");
  if (c.interval_length < 1) bad("pair.interval_length must be >= 1");
  if (!(c.noise.injection_probability >= 0.0 && c.noise.injection_probability <= 1.0)) {
    bad("pair.injection_probability must be in [0, 1]");
  }
  if (c.noise.max_ngram < 1 || c.noise.max_ngram > 3) bad("pair.max_ngram must be in [1, 3]");
  if (c.pair_cap < 0) bad("pair.cap must be >= 0");
  if (c.reward.batch_size < 1) bad("reward.batch_size must be >= 1");
  if (!(c.reward.lr > 0.0)) bad("reward.lr must be > 0");
  if (c.reward.epochs < 0) bad("reward.epochs must be >= 0");
  if (c.reward.weight_decay < 0.0) bad("reward.weight_decay must be >= 0");
  if (c.ppo.beta < 0.0) bad("ppo.beta must be >= 0");
  if (c.ppo.steps < 0) bad("ppo.steps must be >= 0");
  if (c.ppo.rollouts_per_step < 1) bad("ppo.rollouts_per_step must be >= 1");
  if (c.ppo.lr < 0.0) bad("ppo.lr must be >= 0");
  if (!(c.ppo.baseline_decay >= 0.0 && c.ppo.baseline_decay < 1.0)) {
    bad("ppo.baseline_decay must be in [0, 1)");
  }
  if (c.ppo.clip_epsilon < 0.0) bad("ppo.clip_epsilon must be >= 0");
}

std::string config_digest(const PipelineConfig& c) {
  std::map<std::string, std::string> kv;
  const auto num = [](double x) { return nlohmann::json(x).dump(); };
  kv["dataset.path"] = c.dataset_path;
  kv["dataset.prompt_template"] = c.prompt_template;
  kv["embedding.embedder"] = c.embedder;
  kv["embedding.dim"] = std::to_string(c.embedding_dim);
  kv["policy.context_window"] = std::to_string(c.context_window);
  kv["policy.embedding_dim"] = std::to_string(c.policy_embedding_dim);
  kv["policy.hidden_dim"] = std::to_string(c.policy_hidden_dim);
  kv["policy.vocab_size"] = std::to_string(c.vocab_size);
  kv["policy.init_scale"] = num(c.init_scale);
  kv["sft.epochs"] = std::to_string(c.sft_epochs);
  kv["sft.lr"] = num(c.sft_lr);
  kv["generate.temperature"] = num(c.decode.temperature);
  kv["generate.top_p"] = num(c.decode.top_p);
  kv["generate.max_length"] = std::to_string(c.decode.max_length);
  kv["generate.n_samples"] = std::to_string(c.decode.n_samples);
  kv["rank.damping"] = num(c.damping);
  kv["rank.tol"] = num(c.tol);
  kv["rank.max_iter"] = std::to_string(c.max_iter);
  kv["rank.min_similarity"] = num(c.min_similarity);
  kv["cluster.k_init"] = std::to_string(c.isodata.k_init);
  kv["cluster.min_cluster_size"] = std::to_string(c.isodata.min_cluster_size);
  kv["cluster.max_cluster_size"] = std::to_string(c.isodata.max_cluster_size);
  kv["cluster.variance_threshold"] = num(c.isodata.variance_threshold);
  kv["cluster.max_rounds"] = std::to_string(c.isodata.max_rounds);
  kv["cluster.representative"] =
      c.representative == RepresentativePolicy::medoid ? "medoid" : "top-weight";
  kv["pair.interval_length"] = std::to_string(c.interval_length);
  kv["pair.injection_probability"] = num(c.noise.injection_probability);
  kv["pair.max_ngram"] = std::to_string(c.noise.max_ngram);
  kv["pair.cap"] = std::to_string(c.pair_cap);
  kv["reward.batch_size"] = std::to_string(c.reward.batch_size);
  kv["reward.lr"] = num(c.reward.lr);
  kv["reward.epochs"] = std::to_string(c.reward.epochs);
  kv["reward.weight_decay"] = num(c.reward.weight_decay);
  kv["ppo.beta"] = num(c.ppo.beta);
  kv["ppo.steps"] = std::to_string(c.ppo.steps);
  kv["ppo.rollouts_per_step"] = std::to_string(c.ppo.rollouts_per_step);
  kv["ppo.lr"] = num(c.ppo.lr);
  kv["ppo.baseline_decay"] = num(c.ppo.baseline_decay);
  kv["ppo.clip_epsilon"] = num(c.ppo.clip_epsilon);

  std::string canonical;
  for (const auto& [k, v] : kv) {
    canonical += k;
    canonical += '=';
    canonical += v;
    canonical += '\n';
  }
  const std::uint64_t h = fnv1a64(canonical);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace selfrank
