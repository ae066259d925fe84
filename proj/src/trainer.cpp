#include "hierbias/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>

#include "hierbias/errors.hpp"
#include "hierbias/rng.hpp"

namespace hierbias {

namespace {

// k distinct sorted values from [1, n-1]: cut points of a random
// composition of n into k+1 positive parts.
std::vector<long long> cut_points(long long n, long long k, Rng& rng) {
  std::vector<long long> pool(static_cast<std::size_t>(std::max(n - 1, 0LL)));
  std::iota(pool.begin(), pool.end(), 1);
  for (long long i = 0; i < k; ++i) {
    const auto j = i + static_cast<long long>(rng.below(static_cast<std::uint64_t>(pool.size() - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<long long> composition(long long total, long long parts, Rng& rng) {
  const auto cuts = cut_points(total, parts - 1, rng);
  std::vector<long long> out;
  long long prev = 0;
  for (long long c : cuts) {
    out.push_back(c - prev);
    prev = c;
  }
  out.push_back(total - prev);
  return out;
}

}  // namespace

CorruptedExample span_corrupt(const std::vector<TokenId>& ids, double rate, double mean_span, std::uint64_t seed,
                              TokenId sentinel_base, int max_spans, TokenId eos) {
  if (ids.empty()) throw DataError("span_corrupt on an empty sequence");
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("corruption rate must be in [0, 1)");
  if (!(mean_span >= 1.0)) throw UsageError("mean span length must be at least 1");
  if (max_spans < 1) throw UsageError("span corruption needs at least one sentinel");
  if (rate == 0.0) return {ids, {eos}};

  const long long len = static_cast<long long>(ids.size());
  const long long noise = std::min(std::max(static_cast<long long>(std::ceil(rate * len)), 1LL), len);
  const long long keep = len - noise;
  const long long max_fit = std::min({noise, keep + 1, static_cast<long long>(max_spans)});
  const long long spans = std::clamp(std::llround(static_cast<double>(noise) / mean_span), 1LL, max_fit);

  Rng rng(seed);
  const auto noise_lens = composition(noise, spans, rng);
  // spans+1 gaps; the spans-1 interior gaps get one token up front so spans
  // never touch, the rest is spread over all gaps (ends may stay empty).
  const long long extra = keep - (spans - 1);
  auto gaps = composition(extra + spans + 1, spans + 1, rng);
  for (long long i = 0; i <= spans; ++i) gaps[i] -= 1;
  for (long long i = 1; i < spans; ++i) gaps[i] += 1;

  CorruptedExample ex;
  std::size_t pos = 0;
  for (long long s = 0; s <= spans; ++s) {
    for (long long g = 0; g < gaps[s]; ++g) ex.input.push_back(ids[pos++]);
    if (s == spans) break;
    const TokenId sentinel = sentinel_base + static_cast<TokenId>(s);
    ex.input.push_back(sentinel);
    ex.target.push_back(sentinel);
    for (long long n = 0; n < noise_lens[s]; ++n) ex.target.push_back(ids[pos++]);
  }
  ex.target.push_back(eos);
  return ex;
}

std::vector<TokenId> splice_spans(const std::vector<TokenId>& input, const std::vector<TokenId>& target,
                                  TokenId sentinel_base, int num_sentinels, TokenId eos) {
  auto is_sentinel = [&](TokenId t) { return t >= sentinel_base && t < sentinel_base + num_sentinels; };
  std::vector<std::vector<TokenId>> spans(num_sentinels);
  std::vector<bool> seen(num_sentinels, false);
  int current = -1;
  for (TokenId t : target) {
    if (t == eos) break;
    if (is_sentinel(t)) {
      current = t - sentinel_base;
      if (seen[current]) throw DataError("sentinel repeated in target");
      seen[current] = true;
    } else {
      if (current < 0) throw DataError("target token before any sentinel");
      spans[current].push_back(t);
    }
  }
  std::vector<TokenId> out;
  for (TokenId t : input) {
    if (!is_sentinel(t)) {
      out.push_back(t);
      continue;
    }
    const int s = t - sentinel_base;
    if (!seen[s]) throw DataError("input sentinel missing from target");
    out.insert(out.end(), spans[s].begin(), spans[s].end());
  }
  return out;
}

std::vector<std::vector<TokenId>> pack_sequences(const std::vector<std::vector<TokenId>>& sentences, int max_len,
                                                 TokenId separator) {
  if (max_len < 1) throw UsageError("pack length must be positive");
  const std::size_t n = sentences.size();
  std::vector<std::vector<TokenId>> packs;
  if (n == 0) return packs;
  // Segment tree over pack slots holding the largest sentence each slot can
  // still take (remaining room, minus one for the separator once non-empty).
  std::size_t size = 1;
  while (size < n) size <<= 1;
  std::vector<int> tree(2 * size, max_len);
  auto update = [&](std::size_t slot, int room) {
    std::size_t i = slot + size;
    tree[i] = room;
    for (i >>= 1; i >= 1; i >>= 1) tree[i] = std::max(tree[2 * i], tree[2 * i + 1]);
  };
  auto first_fit = [&](int need) {
    std::size_t i = 1;
    while (i < size) i = tree[2 * i] >= need ? 2 * i : 2 * i + 1;
    return i - size;
  };
  for (const auto& raw : sentences) {
    if (raw.empty()) continue;
    const int len = std::min(static_cast<int>(raw.size()), max_len);
    const std::size_t slot = first_fit(len);
    if (slot >= packs.size()) packs.resize(slot + 1);
    auto& pack = packs[slot];
    if (!pack.empty()) pack.push_back(separator);
    pack.insert(pack.end(), raw.begin(), raw.begin() + len);
    update(slot, max_len - static_cast<int>(pack.size()) - 1);
  }
  return packs;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(const std::vector<NamedParam<float>>& params, AdamWConfig config) : params_(params), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var->size(), 0.0f);
    v_.emplace_back(p.var->size(), 0.0f);
    decay_.push_back(p.var->shape.size() >= 2 && !p.name.ends_with("rel_bias"));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(config_.eps);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k].var;
    if (p.grad.size() != p.size()) continue;
    const float decay = decay_[k] ? static_cast<float>(lr * config_.weight_decay) : 0.0f;
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float g = p.grad[i];
      m[i] = fb1 * m[i] + (1.0f - fb1) * g;
      v[i] = fb2 * v[i] + (1.0f - fb2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps) + decay * p.value[i];
    }
  }
}

double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm) {
  double ss = 0;
  for (const auto& p : params) {
    for (float g : p.var->grad) ss += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (const auto& p : params) {
      for (float& g : p.var->grad) g *= scale;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr >= 0)) throw UsageError("learning rate must be non-negative");
  if (batch < 1) throw UsageError("batch size must be positive");
  if (steps < 0) throw UsageError("steps must be non-negative");
  if (steps == 0 && !(epochs >= 0)) throw UsageError("epochs must be non-negative");
  if (checkpoint_every < 1) throw UsageError("checkpoint_every must be positive");
  if (!(corruption_rate >= 0 && corruption_rate < 1)) throw UsageError("corruption rate must be in [0, 1)");
  if (!(mean_span >= 1)) throw UsageError("mean span must be at least 1");
  if (max_len < 2) throw UsageError("max_len must be at least 2");
  if (!(dropout >= 0 && dropout < 1)) throw UsageError("dropout must be in [0, 1)");
}

TrainConfig default_config(Phase phase) {
  TrainConfig c;
  c.phase = phase;
  if (phase == Phase::Pretrain) {
    c.lr = 1e-3;
    c.batch = 32;
    c.steps = 2000;
    c.checkpoint_every = 500;
    c.decay_tau = 100;
    c.packing = true;
  } else {
    c.lr = 1e-3;
    c.batch = 32;
    c.epochs = 10;
    c.checkpoint_every = 500;
    c.decay_tau = 0;
    c.packing = false;
  }
  return c;
}

TrainConfig reference_finetune_config() {
  TrainConfig c = default_config(Phase::Finetune);
  c.epochs = 10;
  c.batch = 128;
  c.lr = 5e-5;
  c.checkpoint_every = 500;
  return c;
}

TrainConfig TrainConfig::from_config(const Config& cfg, Phase phase) {
  const std::string p = phase == Phase::Pretrain ? "pretrain." : "finetune.";
  TrainConfig c = default_config(phase);
  c.lr = cfg.get_double(p + "lr", c.lr);
  c.batch = static_cast<int>(cfg.get_int(p + "batch", c.batch));
  c.steps = cfg.get_int(p + "steps", c.steps);
  c.epochs = cfg.get_double(p + "epochs", c.epochs);
  c.checkpoint_every = cfg.get_int(p + "checkpoint_every", c.checkpoint_every);
  c.seed = static_cast<std::uint64_t>(cfg.get_int(p + "seed", static_cast<long long>(c.seed)));
  c.corruption_rate = cfg.get_double(p + "corruption_rate", c.corruption_rate);
  c.mean_span = cfg.get_double(p + "mean_span", c.mean_span);
  c.max_len = static_cast<int>(cfg.get_int(p + "max_len", c.max_len));
  c.packing = cfg.get_bool(p + "packing", c.packing);
  c.weight_decay = cfg.get_double(p + "weight_decay", c.weight_decay);
  c.decay_tau = cfg.get_int(p + "decay_tau", c.decay_tau);
  c.clip_norm = cfg.get_double(p + "clip_norm", c.clip_norm);
  c.dropout = cfg.get_double(p + "dropout", c.dropout);
  c.strict = cfg.get_bool("strict", c.strict);
  c.validate();
  return c;
}

void TrainConfig::write_to(Config& cfg) const {
  const std::string p = phase == Phase::Pretrain ? "pretrain." : "finetune.";
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  cfg.set(p + "lr", num(lr));
  cfg.set(p + "batch", std::to_string(batch));
  cfg.set(p + "steps", std::to_string(steps));
  cfg.set(p + "epochs", num(epochs));
  cfg.set(p + "checkpoint_every", std::to_string(checkpoint_every));
  cfg.set(p + "seed", std::to_string(seed));
  cfg.set(p + "corruption_rate", num(corruption_rate));
  cfg.set(p + "mean_span", num(mean_span));
  cfg.set(p + "max_len", std::to_string(max_len));
  cfg.set(p + "packing", packing ? "true" : "false");
  cfg.set(p + "weight_decay", num(weight_decay));
  cfg.set(p + "decay_tau", std::to_string(decay_tau));
  cfg.set(p + "clip_norm", num(clip_norm));
  cfg.set(p + "dropout", num(dropout));
  cfg.set("strict", strict ? "true" : "false");
}

double learning_rate(const TrainConfig& c, long long step) {
  if (c.decay_tau <= 0) return c.lr;
  return c.lr * std::sqrt(static_cast<double>(c.decay_tau) / static_cast<double>(std::max(step, c.decay_tau)));
}

long long total_steps(const TrainConfig& c, std::size_t num_examples) {
  if (c.steps > 0) return c.steps;
  return static_cast<long long>(std::ceil(c.epochs * static_cast<double>(num_examples) / c.batch - 1e-9));
}

std::vector<long long> checkpoint_steps(long long total, long long every) {
  if (every < 1) throw UsageError("checkpoint_every must be positive");
  std::vector<long long> out;
  for (long long s = every; s <= total; s += every) out.push_back(s);
  if (out.empty() || out.back() != total) out.push_back(total);
  return out;
}

std::string checkpoint_filename(long long step) { return "step_" + std::to_string(step) + ".ckpt"; }

std::vector<IdPair> encode_examples(const std::vector<TransformExample>& examples, const Tokenizer& tok) {
  std::vector<IdPair> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!tok.covers(ex.source) || !tok.covers(ex.target)) {
      throw DataError("tokenizer does not cover example: " + join_words(ex.source));
    }
    IdPair p{tok.encode_words(ex.source), tok.encode_words(ex.target)};
    p.src.push_back(Tokenizer::kEos);
    p.tgt.push_back(Tokenizer::kEos);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<TokenId>> pretrain_sequences(const std::vector<std::string>& corpus, const Tokenizer& tok,
                                                     const TrainConfig& config) {
  std::vector<std::vector<TokenId>> sentences;
  sentences.reserve(corpus.size());
  const int room = config.max_len - 1;  // eos closes every encoder input
  for (const auto& line : corpus) {
    auto ids = tok.encode(line);
    if (ids.empty()) continue;
    if (static_cast<int>(ids.size()) > room) ids.resize(room);
    sentences.push_back(std::move(ids));
  }
  if (sentences.empty()) throw DataError("pre-training corpus is empty");
  return config.packing ? pack_sequences(sentences, room) : sentences;
}

double evaluate_loss(Transformer<float>& model, const std::vector<IdPair>& pairs, int batch, int max_len) {
  double total = 0;
  long long tokens = 0;
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    std::vector<std::vector<TokenId>> s, t;
    for (std::size_t i = start; i < std::min(pairs.size(), start + batch); ++i) {
      s.push_back(pairs[i].src);
      t.push_back(pairs[i].tgt);
    }
    const auto b = make_batch(s, t, max_len);
    Tape<float> tape(false);
    const long long n = std::count_if(b.labels.begin(), b.labels.end(), [](TokenId l) { return l >= 0; });
    total += static_cast<double>(model.loss(tape, b)->value[0]) * static_cast<double>(n);
    tokens += n;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

namespace {

/// Streams example indices in a fresh permutation per epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }
  std::size_t next() {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return order_[cursor_++];
  }
  std::uint64_t fingerprint() const { return derive_seed(seed_, epoch_, cursor_); }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(derive_seed(seed_, 0xe0, epoch_));
    rng.shuffle(std::span(order_));
    cursor_ = 0;
  }
  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

using BatchFn = std::function<Seq2SeqBatch(long long step)>;

TrainResult train_loop(Transformer<float>& model, const TrainConfig& config, long long total, const BatchFn& next_batch,
                       const std::function<std::uint64_t()>& rng_fp, std::uint64_t tok_fp,
                       const std::filesystem::path& run_dir, const Config* snapshot) {
  config.validate();
  set_strict_determinism(config.strict);
  model.set_dropout(config.dropout, derive_seed(config.seed, 0xd7));
  std::filesystem::create_directories(run_dir);
  Config snap;
  if (snapshot) snap = *snapshot;
  config.write_to(snap);
  snap.set("arch", model.config().fingerprint());
  snap.save(run_dir / "config.snapshot");

  TrainResult result;
  const auto ckpt_steps = checkpoint_steps(total, config.checkpoint_every);
  auto save = [&](long long step) {
    const auto path = run_dir / checkpoint_filename(step);
    save_checkpoint(path, model.to_checkpoint(static_cast<std::uint64_t>(step), rng_fp(), tok_fp));
    result.checkpoints.push_back({step, path});
  };
  std::string log = "step,loss,lr,wall_ms\n";
  if (total == 0) save(0);
  AdamW opt(model.parameters(), {0.9, 0.999, 1e-8, config.weight_decay});
  const auto start = std::chrono::steady_clock::now();
  std::size_t next_ckpt = 0;
  for (long long step = 1; step <= total; ++step) {
    const auto batch = next_batch(step);
    model.zero_grad();
    Tape<float> tape;
    const auto loss = model.loss(tape, batch);
    const double value = loss->value[0];
    if (!std::isfinite(value)) {
      const auto bad = model.find_nonfinite();
      throw NumericalError("non-finite loss at step " + std::to_string(step) +
                           (bad.empty() ? std::string(" (logits)") : " (tensor " + bad + ")"));
    }
    tape.backward(loss);
    clip_grad_norm(model.parameters(), config.clip_norm);
    if (const auto bad = model.find_nonfinite(); !bad.empty()) {
      throw NumericalError("non-finite gradient at step " + std::to_string(step) + " in " + bad);
    }
    const double lr = learning_rate(config, step);
    opt.step(lr);
    result.losses.push_back(value);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    char line[128];
    std::snprintf(line, sizeof(line), "%lld,%.6f,%.6g,%lld\n", step, value, lr, static_cast<long long>(ms.count()));
    log += line;
    if (next_ckpt < ckpt_steps.size() && ckpt_steps[next_ckpt] == step) {
      save(step);
      ++next_ckpt;
      write_file(run_dir / "train_log.csv", log);
    }
  }
  write_file(run_dir / "train_log.csv", log);
  return result;
}

void check_vocab(const Transformer<float>& model, const Tokenizer& tok) {
  if (model.config().vocab != tok.size()) {
    throw DataError("vocabulary mismatch: model has " + std::to_string(model.config().vocab) +
                    " ids, tokenizer has " + std::to_string(tok.size()));
  }
}

}  // namespace

TrainResult pretrain(Transformer<float>& model, const std::vector<std::string>& corpus, const Tokenizer& tok,
                     const TrainConfig& config, const std::filesystem::path& run_dir, const Config* snapshot) {
  check_vocab(model, tok);
  if (tok.num_sentinels() < 1) throw DataError("pre-training needs a tokenizer with sentinel ids");
  const auto seqs = pretrain_sequences(corpus, tok, config);
  EpochSampler sampler(seqs.size(), config.seed);
  const long long total = total_steps(config, seqs.size());
  auto next = [&](long long step) {
    std::vector<std::vector<TokenId>> s, t;
    for (int i = 0; i < config.batch; ++i) {
      const auto& ids = seqs[sampler.next()];
      auto ex = span_corrupt(ids, config.corruption_rate, config.mean_span,
                             derive_seed(config.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)),
                             tok.sentinel(0), tok.num_sentinels());
      ex.input.push_back(Tokenizer::kEos);
      s.push_back(std::move(ex.input));
      t.push_back(std::move(ex.target));
    }
    return make_batch(s, t, config.max_len);
  };
  return train_loop(model, config, total, next, [&] { return sampler.fingerprint(); }, tok.fingerprint(), run_dir,
                    snapshot);
}

TrainResult finetune(Transformer<float>& model, const std::vector<TransformExample>& train, const Tokenizer& tok,
                     const TrainConfig& config, const std::filesystem::path& run_dir, const Config* snapshot) {
  check_vocab(model, tok);
  if (train.empty()) throw DataError("fine-tuning set is empty");
  const auto pairs = encode_examples(train, tok);
  EpochSampler sampler(pairs.size(), config.seed);
  const long long total = total_steps(config, pairs.size());
  auto next = [&](long long) {
    std::vector<std::vector<TokenId>> s, t;
    for (int i = 0; i < config.batch; ++i) {
      const auto& p = pairs[sampler.next()];
      s.push_back(p.src);
      t.push_back(p.tgt);
    }
    return make_batch(s, t, config.max_len);
  };
  return train_loop(model, config, total, next, [&] { return sampler.fingerprint(); }, tok.fingerprint(), run_dir,
                    snapshot);
}

}  // namespace hierbias
