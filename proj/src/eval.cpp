#include "hierbias/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "hierbias/errors.hpp"
#include "hierbias/rng.hpp"
#include "hierbias/text.hpp"

namespace hierbias {

double sequence_accuracy(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references) {
  if (predictions.size() != references.size()) {
    throw DataError("prediction count " + std::to_string(predictions.size()) + " does not match reference count " +
                    std::to_string(references.size()));
  }
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::string initial_np_head(const Tokens& prediction, const Grammar& grammar) {
  for (const auto& w : prediction) {
    if (grammar.is_verb(w) || grammar.is_auxiliary(w)) break;
    if (grammar.is_noun(w)) return w;
  }
  return {};
}

bool main_aux_correct(const Tokens& prediction, const TransformExample& example) {
  return !prediction.empty() && prediction.front() == example.source.at(example.meta.main_aux_idx);
}

bool object_correct(const Tokens& prediction, const TransformExample& example, const Grammar& grammar) {
  const auto head = initial_np_head(prediction, grammar);
  return !head.empty() && head == example.source.at(example.meta.object_idx);
}

bool targeted_correct(const Tokens& prediction, const TransformExample& example, const Grammar& grammar) {
  return example.task == Task::Question ? main_aux_correct(prediction, example)
                                        : object_correct(prediction, example, grammar);
}

namespace {

template <class Pred>
double fraction(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples, Pred pred) {
  if (predictions.size() != examples.size()) throw DataError("prediction count does not match example count");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += pred(predictions[i], examples[i]);
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace

double main_aux_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples) {
  return fraction(predictions, examples, [](const Tokens& p, const TransformExample& e) { return main_aux_correct(p, e); });
}

double object_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples,
                       const Grammar& grammar) {
  return fraction(predictions, examples,
                  [&](const Tokens& p, const TransformExample& e) { return object_correct(p, e, grammar); });
}

double targeted_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples,
                         const Grammar& grammar) {
  return fraction(predictions, examples,
                  [&](const Tokens& p, const TransformExample& e) { return targeted_correct(p, e, grammar); });
}

std::vector<OracleScore> score_oracles(const TransformSplits& splits, const Grammar& grammar) {
  std::vector<OracleScore> out;
  for (const auto& rule : transform_rules()) {
    if (rule.task != splits.task) continue;
    for (Split split : {Split::Train, Split::Test, Split::Gen}) {
      const auto& examples = splits.get(split);
      std::vector<Tokens> preds;
      preds.reserve(examples.size());
      for (const auto& ex : examples) preds.push_back(apply_rule(rule.name, rule.task, ex.source, grammar));
      const auto s = score_predictions(0, preds, examples, grammar);
      out.push_back({rule.task, rule.name, rule.hypothesis, split, s.seq_acc, s.targeted_acc});
    }
  }
  return out;
}

std::vector<std::string> oracle_violations(const std::vector<OracleScore>& scores) {
  std::vector<std::string> out;
  for (const auto& s : scores) {
    const std::string where = std::string(to_string(s.task)) + " " + s.rule + " " + std::string(to_string(s.split));
    if (s.hypothesis == Hypothesis::Hierarchical) {
      if (s.seq_acc != 1.0) out.push_back(where + ": sequence accuracy " + std::to_string(s.seq_acc) + " != 1");
    } else if (s.split == Split::Gen) {
      if (s.targeted_acc != 0.0) out.push_back(where + ": targeted accuracy " + std::to_string(s.targeted_acc) + " != 0");
    } else if (s.seq_acc != 1.0) {
      out.push_back(where + ": sequence accuracy " + std::to_string(s.seq_acc) + " != 1");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Tokens> predict(const Transformer<float>& model, const std::vector<TransformExample>& examples,
                            const Tokenizer& tok, int max_decode_len) {
  std::vector<std::vector<TokenId>> srcs;
  srcs.reserve(examples.size());
  for (const auto& ex : examples) {
    auto ids = tok.encode_words(ex.source);
    ids.push_back(Tokenizer::kEos);
    srcs.push_back(std::move(ids));
  }
  const auto out = model.greedy_decode(srcs, max_decode_len);
  std::vector<Tokens> preds;
  preds.reserve(out.size());
  for (const auto& ids : out) preds.push_back(split_words(tok.decode_until_eos(ids)));
  return preds;
}

CheckpointScore score_predictions(long long step, const std::vector<Tokens>& predictions,
                                  const std::vector<TransformExample>& examples, const Grammar& grammar) {
  std::vector<Tokens> refs;
  refs.reserve(examples.size());
  for (const auto& ex : examples) refs.push_back(ex.target);
  return {step, sequence_accuracy(predictions, refs), targeted_accuracy(predictions, examples, grammar)};
}

void finalize_means(EvalResult& result) {
  if (result.per_checkpoint.empty()) throw DataError("no checkpoints to average");
  double seq = 0, tgt = 0;
  for (const auto& c : result.per_checkpoint) {
    seq += c.seq_acc;
    tgt += c.targeted_acc;
  }
  const double n = static_cast<double>(result.per_checkpoint.size());
  result.mean_seq_acc = seq / n;
  result.mean_targeted_acc = tgt / n;
}

std::vector<EvalResult> evaluate_checkpoints(
    const std::vector<CheckpointRef>& checkpoints,
    const std::vector<std::pair<Split, const std::vector<TransformExample>*>>& data, const Tokenizer& tok,
    const Grammar& grammar, int max_decode_len, std::uint64_t seed) {
  if (checkpoints.empty()) throw DataError("empty checkpoint series");
  std::vector<EvalResult> results;
  for (const auto& [split, examples] : data) {
    if (examples->empty()) throw DataError("empty evaluation split " + std::string(to_string(split)));
    EvalResult r;
    r.task = examples->front().task;
    r.split = split;
    r.seed = seed;
    results.push_back(r);
  }
  for (const auto& ref : checkpoints) {
    const auto ckpt = load_checkpoint(ref.path);
    if (ckpt.tokenizer_fingerprint != tok.fingerprint()) {
      throw DataError("checkpoint " + ref.path.string() + " was trained with a different tokenizer");
    }
    const auto model = Transformer<float>::from_checkpoint(ckpt);
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto preds = predict(model, *data[k].second, tok, max_decode_len);
      results[k].per_checkpoint.push_back(score_predictions(ref.step, preds, *data[k].second, grammar));
    }
  }
  for (auto& r : results) finalize_means(r);
  return results;
}

std::vector<CheckpointRef> list_checkpoints(const std::filesystem::path& run_dir) {
  if (!std::filesystem::is_directory(run_dir)) throw DataError("not a run directory: " + run_dir.string());
  std::vector<CheckpointRef> out;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    const auto name = entry.path().filename().string();
    if (!name.starts_with("step_") || !name.ends_with(".ckpt")) continue;
    const auto digits = name.substr(5, name.size() - 10);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    out.push_back({std::stoll(digits), entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

namespace {

std::string join_list(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + x;
  return out;
}

}  // namespace

ArchConfig arch_from_config(const Config& c) {
  ArchConfig a = arch_preset(c.get_string("arch.preset", "desk"), 0);
  if (c.has("arch.nl")) a.el = a.dl = static_cast<int>(c.get_int("arch.nl", 0));
  a.el = static_cast<int>(c.get_int("arch.el", a.el));
  a.dl = static_cast<int>(c.get_int("arch.dl", a.dl));
  a.dm = static_cast<int>(c.get_int("arch.dm", a.dm));
  a.ff = static_cast<int>(c.get_int("arch.ff", a.ff));
  a.nh = static_cast<int>(c.get_int("arch.nh", a.nh));
  a.kv = static_cast<int>(c.get_int("arch.kv", a.kv));
  a.max_len = static_cast<int>(c.get_int("arch.max_len", a.max_len));
  a.tie_embeddings = c.get_bool("arch.tie_embeddings", a.tie_embeddings);
  return a;
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  ExperimentConfig e;
  e.run_id = c.get_string("run_id", e.run_id);
  if (e.run_id.empty() || e.run_id.find_first_of(",\n\"") != std::string::npos) {
    throw UsageError("run_id must be non-empty without commas or quotes");
  }
  e.task = parse_task(c.get_string("task", "quest"));

  e.arch = arch_from_config(c);

  e.data_seed = static_cast<std::uint64_t>(c.get_int("data.seed", static_cast<long long>(e.data_seed)));
  e.sizes.n_train = static_cast<std::size_t>(c.get_int("data.train", static_cast<long long>(e.sizes.n_train)));
  e.sizes.n_test = static_cast<std::size_t>(c.get_int("data.test", static_cast<long long>(e.sizes.n_test)));
  e.sizes.n_gen = static_cast<std::size_t>(c.get_int("data.gen", static_cast<long long>(e.sizes.n_gen)));

  e.tokenizer.mode = parse_tokenizer_mode(c.get_string("tokenizer.mode", "word"));
  e.tokenizer.vocab_size = static_cast<int>(c.get_int("tokenizer.vocab_size", e.tokenizer.vocab_size));
  e.tokenizer.num_sentinels = static_cast<int>(c.get_int("tokenizer.sentinels", e.tokenizer.num_sentinels));

  const auto corpus = c.get_list("pretrain.corpus");
  if (!corpus.empty() && !(corpus.size() == 1 && corpus[0] == "none")) {
    PretrainSpec p;
    for (const auto& item : corpus) {
      std::string commas = item;
      std::replace(commas.begin(), commas.end(), '+', ',');
      for (const auto& r : split_list(commas)) p.registers.push_back(parse_register(r));
    }
    p.words = static_cast<std::size_t>(c.get_int("pretrain.words", static_cast<long long>(p.words)));
    p.corpus_seed = static_cast<std::uint64_t>(c.get_int("pretrain.corpus_seed", 0));
    if (c.has("pretrain.source")) p.source_path = c.get("pretrain.source");
    p.train = TrainConfig::from_config(c, Phase::Pretrain);
    e.pretrain = p;
  }
  e.finetune = TrainConfig::from_config(c, Phase::Finetune);
  e.finetune.max_len = e.arch.max_len;
  if (e.pretrain) e.pretrain->train.max_len = e.arch.max_len;

  if (c.has("seeds")) {
    e.seeds.clear();
    for (const auto& s : c.get_list("seeds")) e.seeds.push_back(static_cast<std::uint64_t>(parse_int(s, "seeds")));
  }
  if (e.seeds.empty()) throw UsageError("at least one fine-tuning seed is required");
  if (c.has("eval.splits")) {
    e.eval_splits.clear();
    for (const auto& s : c.get_list("eval.splits")) e.eval_splits.push_back(parse_split(s));
  }
  e.max_decode_len = static_cast<int>(c.get_int("eval.max_decode_len", e.max_decode_len));
  if (e.max_decode_len < 1) throw UsageError("eval.max_decode_len must be positive");
  return e;
}

void ExperimentConfig::write_to(Config& c) const {
  c.set("run_id", run_id);
  c.set("task", std::string(to_string(task)));
  c.set("arch.el", std::to_string(arch.el));
  c.set("arch.dl", std::to_string(arch.dl));
  c.set("arch.dm", std::to_string(arch.dm));
  c.set("arch.ff", std::to_string(arch.ff));
  c.set("arch.nh", std::to_string(arch.nh));
  c.set("arch.kv", std::to_string(arch.kv));
  c.set("arch.max_len", std::to_string(arch.max_len));
  c.set("arch.tie_embeddings", arch.tie_embeddings ? "true" : "false");
  c.set("data.seed", std::to_string(data_seed));
  c.set("data.train", std::to_string(sizes.n_train));
  c.set("data.test", std::to_string(sizes.n_test));
  c.set("data.gen", std::to_string(sizes.n_gen));
  c.set("tokenizer.mode", std::string(to_string(tokenizer.mode)));
  c.set("tokenizer.vocab_size", std::to_string(tokenizer.vocab_size));
  c.set("tokenizer.sentinels", std::to_string(tokenizer.num_sentinels));
  c.set("pretrain.corpus", pretrain_label());
  if (pretrain) {
    c.set("pretrain.words", std::to_string(pretrain->words));
    c.set("pretrain.corpus_seed", std::to_string(pretrain->corpus_seed));
    if (pretrain->source_path) c.set("pretrain.source", pretrain->source_path->string());
    pretrain->train.write_to(c);
  }
  finetune.write_to(c);
  std::vector<std::string> s, sp;
  for (auto v : seeds) s.push_back(std::to_string(v));
  for (auto v : eval_splits) sp.emplace_back(to_string(v));
  c.set("seeds", join_list(s));
  c.set("eval.splits", join_list(sp));
  c.set("eval.max_decode_len", std::to_string(max_decode_len));
}

std::string ExperimentConfig::pretrain_label() const {
  if (!pretrain) return "none";
  std::string out;
  for (auto r : pretrain->registers) out += (out.empty() ? "" : "+") + std::string(to_string(r));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

const char* const kResultHeader =
    "run_id,task,arch_fingerprint,params,pretrain_corpus,pretrain_words,seed,split,step,seq_acc,targeted_acc";
const char* const kSummaryHeader =
    "run_id,task,arch_fingerprint,params,pretrain_corpus,pretrain_words,split,seeds,seq_acc_mean,seq_acc_std,"
    "targeted_acc_mean,targeted_acc_std";
const char* const kFailureHeader = "run_id,seed,stage,reason";

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '"') ch = ';';
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

std::string format_row(const ResultRow& r) {
  std::ostringstream o;
  o << r.run_id << ',' << to_string(r.task) << ',' << r.arch_fingerprint << ',' << r.params << ','
    << r.pretrain_corpus << ',' << r.pretrain_words << ',' << r.seed << ',' << to_string(r.split) << ','
    << (r.step < 0 ? std::string("mean") : std::to_string(r.step)) << ',' << fixed(r.seq_acc) << ','
    << fixed(r.targeted_acc);
  return o.str();
}

std::string format_summary(const SummaryRow& r) {
  std::ostringstream o;
  o << r.run_id << ',' << to_string(r.task) << ',' << r.arch_fingerprint << ',' << r.params << ','
    << r.pretrain_corpus << ',' << r.pretrain_words << ',' << to_string(r.split) << ',' << r.seeds << ','
    << fixed(r.seq_mean) << ',' << fixed(r.seq_std) << ',' << fixed(r.targeted_mean) << ','
    << fixed(r.targeted_std);
  return o.str();
}

std::string format_failure(const FailureRow& r) {
  return r.run_id + "," + std::to_string(r.seed) + "," + r.stage + "," + sanitize(r.reason);
}

std::vector<ResultRow> read_results(const std::filesystem::path& csv) {
  if (!std::filesystem::exists(csv)) throw DataError("results file not found: " + csv.string());
  const auto lines = read_lines(csv);
  if (lines.empty() || lines[0] != kResultHeader) throw DataError("not a results CSV: " + csv.string());
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(lines[i]);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw DataError(csv.string() + ":" + std::to_string(i + 1) + ": expected 11 fields");
    try {
      ResultRow r;
      r.run_id = f[0];
      r.task = parse_task(f[1]);
      r.arch_fingerprint = f[2];
      r.params = std::stoll(f[3]);
      r.pretrain_corpus = f[4];
      r.pretrain_words = std::stoull(f[5]);
      r.seed = std::stoull(f[6]);
      r.split = parse_split(f[7]);
      r.step = f[8] == "mean" ? -1 : std::stoll(f[8]);
      r.seq_acc = std::stod(f[9]);
      r.targeted_acc = std::stod(f[10]);
      rows.push_back(r);
    } catch (const UsageError& e) {
      throw DataError(csv.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::logic_error&) {
      throw DataError(csv.string() + ":" + std::to_string(i + 1) + ": malformed number");
    }
  }
  return rows;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> values;
  for (const auto& r : rows) {
    if (r.step >= 0) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.run_id == r.run_id && s.task == r.task && s.arch_fingerprint == r.arch_fingerprint &&
             s.pretrain_corpus == r.pretrain_corpus && s.pretrain_words == r.pretrain_words && s.split == r.split;
    });
    if (it == out.end()) {
      SummaryRow s;
      s.run_id = r.run_id;
      s.task = r.task;
      s.arch_fingerprint = r.arch_fingerprint;
      s.params = r.params;
      s.pretrain_corpus = r.pretrain_corpus;
      s.pretrain_words = r.pretrain_words;
      s.split = r.split;
      out.push_back(s);
      values.emplace_back();
      it = out.end() - 1;
    }
    auto& v = values[static_cast<std::size_t>(it - out.begin())];
    v.first.push_back(r.seq_acc);
    v.second.push_back(r.targeted_acc);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].seeds = static_cast<int>(values[i].first.size());
    std::tie(out[i].seq_mean, out[i].seq_std) = mean_std(values[i].first);
    std::tie(out[i].targeted_mean, out[i].targeted_std) = mean_std(values[i].second);
  }
  return out;
}

void write_results(const ExperimentResult& result, const std::filesystem::path& out_dir) {
  std::vector<std::string> rows{kResultHeader}, ckpts{kResultHeader}, summary{kSummaryHeader},
      failures{kFailureHeader};
  for (const auto& r : result.rows) rows.push_back(format_row(r));
  for (const auto& r : result.checkpoints) ckpts.push_back(format_row(r));
  for (const auto& r : result.summary) summary.push_back(format_summary(r));
  for (const auto& r : result.failures) failures.push_back(format_failure(r));
  write_lines(out_dir / "results.csv", rows);
  write_lines(out_dir / "checkpoints.csv", ckpts);
  write_lines(out_dir / "summary.csv", summary);
  write_lines(out_dir / "failures.csv", failures);
}

// ---------------------------------------------------------------------------
// Experiment runner

std::vector<std::string> build_pretrain_corpus(const PretrainSpec& spec, const Grammar& grammar) {
  if (spec.registers.empty()) throw UsageError("pre-training corpus has no components");
  std::vector<std::string> corpus;
  for (std::size_t i = 0; i < spec.registers.size(); ++i) {
    CorpusSpec cs{spec.registers[i], spec.words, derive_seed(spec.corpus_seed, 0xc0, i), spec.source_path};
    auto part = synth_corpus(cs, grammar);
    corpus = i == 0 ? std::move(part) : concat_corpora(corpus, part, derive_seed(spec.corpus_seed, 0xcc, i));
  }
  return corpus;
}

Tokenizer word_tokenizer(const Grammar& grammar, const std::vector<std::string>* corpus, int num_sentinels) {
  auto vocab = grammar.vocabulary();
  if (corpus) {
    const std::set<std::string> known(vocab.begin(), vocab.end());
    std::set<std::string> extra;
    for (const auto& line : *corpus) {
      for (auto& w : split_words(normalize_text(line))) {
        if (!known.count(w)) extra.insert(std::move(w));
      }
    }
    vocab.insert(vocab.end(), extra.begin(), extra.end());
  }
  return Tokenizer::word(vocab, num_sentinels);
}

Tokenizer experiment_tokenizer(const TokenizerConfig& config, const Grammar& grammar,
                               const std::vector<std::string>* corpus, const TransformSplits& splits) {
  if (config.mode == TokenizerMode::Word) return word_tokenizer(grammar, corpus, config.num_sentinels);
  if (corpus) return Tokenizer::train_subword(*corpus, config);
  std::vector<std::string> lines;
  for (const auto& ex : splits.train) {
    lines.push_back(join_words(ex.source));
    lines.push_back(join_words(ex.target));
  }
  return Tokenizer::train_subword(lines, config);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Grammar& grammar,
                                const std::filesystem::path& out_dir, const std::vector<std::string>* corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Config snapshot;
  config.write_to(snapshot);
  snapshot.save(out_dir / "config.snapshot");

  ExperimentResult result;
  const auto splits = build_transform_splits(config.task, grammar, config.sizes, config.data_seed);
  write_splits(splits, out_dir / "data");

  std::vector<std::string> owned;
  if (config.pretrain && !corpus) {
    owned = build_pretrain_corpus(*config.pretrain, grammar);
    corpus = &owned;
  }
  if (!config.pretrain) corpus = nullptr;
  const std::size_t pretrain_words = corpus ? count_words(*corpus) : 0;
  const auto tok = experiment_tokenizer(config.tokenizer, grammar, corpus, splits);
  tok.save(out_dir / "tokenizer.txt");

  ArchConfig arch = config.arch;
  arch.vocab = tok.size();
  arch.validate();
  const std::int64_t params = count_params(arch);

  std::optional<Checkpoint> pretrained;
  if (config.pretrain) {
    try {
      Transformer<float> model(arch, derive_seed(config.pretrain->train.seed, 0x1417));
      const auto r = pretrain(model, *corpus, tok, config.pretrain->train, out_dir / "pretrain", &snapshot);
      pretrained = load_checkpoint(r.checkpoints.back().path);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      for (auto seed : config.seeds) result.failures.push_back({config.run_id, seed, "pretrain", e.what()});
    }
  }

  std::vector<std::pair<Split, const std::vector<TransformExample>*>> data;
  for (auto s : config.eval_splits) data.emplace_back(s, &splits.get(s));

  if (!config.pretrain || pretrained) {
    for (auto seed : config.seeds) {
      std::string stage = "finetune";
      try {
        auto model = pretrained ? Transformer<float>::from_checkpoint(*pretrained)
                                : Transformer<float>(arch, derive_seed(seed, 0x1417));
        TrainConfig ft = config.finetune;
        ft.seed = seed;
        const auto run_dir = out_dir / ("seed_" + std::to_string(seed));
        const auto trained = finetune(model, splits.train, tok, ft, run_dir, &snapshot);
        stage = "eval";
        const auto evals = evaluate_checkpoints(trained.checkpoints, data, tok, grammar, config.max_decode_len, seed);
        for (const auto& ev : evals) {
          ResultRow base{config.run_id, config.task, arch.fingerprint(), params, config.pretrain_label(),
                         pretrain_words, seed, ev.split, -1, ev.mean_seq_acc, ev.mean_targeted_acc};
          result.rows.push_back(base);
          for (const auto& c : ev.per_checkpoint) {
            ResultRow r = base;
            r.step = c.step;
            r.seq_acc = c.seq_acc;
            r.targeted_acc = c.targeted_acc;
            result.checkpoints.push_back(r);
          }
        }
      } catch (const UsageError&) {
        throw;
      } catch (const std::exception& e) {
        result.failures.push_back({config.run_id, seed, stage, e.what()});
      }
    }
  }
  result.summary = summarize(result.rows);
  write_results(result, out_dir);
  return result;
}

}  // namespace hierbias
