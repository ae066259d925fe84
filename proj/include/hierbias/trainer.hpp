#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hierbias/config.hpp"
#include "hierbias/dataset.hpp"
#include "hierbias/model.hpp"
#include "hierbias/tokenizer.hpp"

namespace hierbias {

// ---------------------------------------------------------------------------
// Span corruption and packing

struct CorruptedExample {
  std::vector<TokenId> input;
  std::vector<TokenId> target;
};

/// Masks ceil(rate * len) tokens (at least one when rate > 0, at most len)
/// with round(noise / mean_span) spans, clamped to [1, max_spans] and to the
/// number of gaps available so that spans never touch. Span i is replaced by
/// sentinel_base + i in the input; target = s0 span0 s1 span1 ... eos.
/// rate == 0 leaves the input unchanged with target [eos].
CorruptedExample span_corrupt(const std::vector<TokenId>& ids, double rate, double mean_span, std::uint64_t seed,
                              TokenId sentinel_base, int max_spans, TokenId eos = 1);

/// Inverse of span_corrupt: splices target spans back over the sentinels.
std::vector<TokenId> splice_spans(const std::vector<TokenId>& input, const std::vector<TokenId>& target,
                                  TokenId sentinel_base, int num_sentinels, TokenId eos = 1);

/// First-fit packing in sentence order: each sentence goes into the earliest
/// pack with room for it plus a separator. Sentences longer than max_len
/// are truncated to max_len and packed alone.
std::vector<std::vector<TokenId>> pack_sequences(const std::vector<std::vector<TokenId>>& sentences, int max_len,
                                                 TokenId separator = 1);

// ---------------------------------------------------------------------------
// Optimization

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay (applied to matrices only, not norm gains or
/// position-bias tables).
class AdamW {
 public:
  AdamW(const std::vector<NamedParam<float>>& params, AdamWConfig config);
  void step(double lr);
  long long steps() const { return t_; }

 private:
  std::vector<NamedParam<float>> params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<bool> decay_;
  long long t_ = 0;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm);

enum class Phase { Pretrain, Finetune };

struct TrainConfig {
  Phase phase = Phase::Finetune;
  double lr = 1e-3;
  int batch = 32;
  /// When > 0 fixes the step count; otherwise ceil(epochs * n / batch).
  long long steps = 0;
  double epochs = 10;
  long long checkpoint_every = 500;
  std::uint64_t seed = 0;
  double corruption_rate = 0.15;
  double mean_span = 3.0;
  int max_len = 128;
  bool packing = true;
  double weight_decay = 0.01;
  /// Inverse-square-root decay: lr * sqrt(tau / max(step, tau)). 0 = constant.
  long long decay_tau = 0;
  double clip_norm = 1.0;
  double dropout = 0.0;
  bool strict = true;

  void validate() const;
  /// Keys under prefix ("pretrain." / "finetune.").
  static TrainConfig from_config(const Config& c, Phase phase);
  void write_to(Config& c) const;
};

/// Full-scale reference fine-tuning setting: 10 epochs, batch 128, lr 5e-5,
/// checkpoints every 500 steps.
TrainConfig reference_finetune_config();
/// Desk-scale defaults for each phase.
TrainConfig default_config(Phase phase);

double learning_rate(const TrainConfig& c, long long step);
long long total_steps(const TrainConfig& c, std::size_t num_examples);
/// Checkpoint steps for a run: every multiple of checkpoint_every up to
/// total, plus total itself (0 alone for an empty run).
std::vector<long long> checkpoint_steps(long long total, long long every);

struct CheckpointRef {
  long long step = 0;
  std::filesystem::path path;
};

struct TrainResult {
  std::vector<CheckpointRef> checkpoints;
  std::vector<double> losses;  // per step
};

/// Seq2seq pair in token ids, eos appended to both sides.
struct IdPair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
};

/// Throws DataError if the tokenizer cannot represent an example (word mode
/// with out-of-vocabulary words).
std::vector<IdPair> encode_examples(const std::vector<TransformExample>& examples, const Tokenizer& tok);

/// Writes run_dir/step_{N}.ckpt, run_dir/train_log.csv (step,loss,lr,wall_ms)
/// and run_dir/config.snapshot. Aborts with NumericalError naming the
/// offending tensor on a non-finite loss.
TrainResult pretrain(Transformer<float>& model, const std::vector<std::string>& corpus, const Tokenizer& tok,
                     const TrainConfig& config, const std::filesystem::path& run_dir,
                     const Config* snapshot = nullptr);

TrainResult finetune(Transformer<float>& model, const std::vector<TransformExample>& train, const Tokenizer& tok,
                     const TrainConfig& config, const std::filesystem::path& run_dir,
                     const Config* snapshot = nullptr);

/// Mean teacher-forced loss over pairs (no gradient).
double evaluate_loss(Transformer<float>& model, const std::vector<IdPair>& pairs, int batch, int max_len);

/// Pre-training pairs for a corpus: encode, optionally pack, then corrupt
/// each sequence with a per-sequence seed.
std::vector<std::vector<TokenId>> pretrain_sequences(const std::vector<std::string>& corpus, const Tokenizer& tok,
                                                     const TrainConfig& config);

std::string checkpoint_filename(long long step);

}  // namespace hierbias
