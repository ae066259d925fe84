#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierbias/config.hpp"
#include "hierbias/dataset.hpp"
#include "hierbias/model.hpp"
#include "hierbias/tokenizer.hpp"
#include "hierbias/trainer.hpp"

namespace hierbias {

// ---------------------------------------------------------------------------
// Metrics. Predictions and references are compared as word sequences.

/// Fraction of exact word-sequence matches. Throws DataError on a count
/// mismatch.
double sequence_accuracy(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references);

/// Head noun of the prediction's initial NP: the first lexicon noun before
/// the first verb or auxiliary. Empty when there is none.
std::string initial_np_head(const Tokens& prediction, const Grammar& grammar);

bool main_aux_correct(const Tokens& prediction, const TransformExample& example);
bool object_correct(const Tokens& prediction, const TransformExample& example, const Grammar& grammar);
/// main_aux_correct for questions, object_correct for passives.
bool targeted_correct(const Tokens& prediction, const TransformExample& example, const Grammar& grammar);

double main_aux_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples);
double object_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples,
                       const Grammar& grammar);
double targeted_accuracy(const std::vector<Tokens>& predictions, const std::vector<TransformExample>& examples,
                         const Grammar& grammar);

struct OracleScore {
  Task task = Task::Question;
  std::string rule;
  Hypothesis hypothesis = Hypothesis::Hierarchical;
  Split split = Split::Train;
  double seq_acc = 0.0;
  double targeted_acc = 0.0;
};

/// Scores every transformation rule of the task as if it were a model.
std::vector<OracleScore> score_oracles(const TransformSplits& splits, const Grammar& grammar);

/// Hierarchical rules exact everywhere; linear rules exact on train/test
/// and never targeted-correct on gen. Returns the violations (empty = ok).
std::vector<std::string> oracle_violations(const std::vector<OracleScore>& scores);

// ---------------------------------------------------------------------------
// Checkpoint evaluation

struct CheckpointScore {
  long long step = 0;
  double seq_acc = 0.0;
  double targeted_acc = 0.0;
};

struct EvalResult {
  Task task = Task::Question;
  Split split = Split::Gen;
  std::uint64_t seed = 0;
  std::vector<CheckpointScore> per_checkpoint;
  double mean_seq_acc = 0.0;
  double mean_targeted_acc = 0.0;
};

/// Greedy-decodes every example and renders the words before eos.
std::vector<Tokens> predict(const Transformer<float>& model, const std::vector<TransformExample>& examples,
                            const Tokenizer& tok, int max_decode_len);

/// Scores one set of predictions.
CheckpointScore score_predictions(long long step, const std::vector<Tokens>& predictions,
                                  const std::vector<TransformExample>& examples, const Grammar& grammar);

/// Arithmetic means of the per-checkpoint values.
void finalize_means(EvalResult& result);

/// Evaluates each checkpoint on each split. Throws DataError on an empty
/// series or a checkpoint trained with a different tokenizer.
std::vector<EvalResult> evaluate_checkpoints(const std::vector<CheckpointRef>& checkpoints,
                                             const std::vector<std::pair<Split, const std::vector<TransformExample>*>>& data,
                                             const Tokenizer& tok, const Grammar& grammar, int max_decode_len,
                                             std::uint64_t seed = 0);

/// Checkpoints in a run directory (step_N.ckpt), sorted by step.
std::vector<CheckpointRef> list_checkpoints(const std::filesystem::path& run_dir);

// ---------------------------------------------------------------------------
// Experiments

/// arch.preset (default desk) then arch.nl / el / dl / dm / ff / nh / kv /
/// max_len / tie_embeddings overrides. vocab is left at 0.
ArchConfig arch_from_config(const Config& c);

/// Word tokenizer over the grammar's surface forms followed by any other
/// word types of the corpus.
Tokenizer word_tokenizer(const Grammar& grammar, const std::vector<std::string>* corpus, int num_sentinels);

struct PretrainSpec {
  /// Corpus components concatenated in order ("simple", "complex", "external").
  std::vector<Register> registers;
  std::size_t words = 1000000;
  std::uint64_t corpus_seed = 0;
  std::optional<std::filesystem::path> source_path;
  TrainConfig train = default_config(Phase::Pretrain);
};

struct ExperimentConfig {
  std::string run_id = "run";
  Task task = Task::Question;
  ArchConfig arch;  // vocab is filled from the tokenizer
  std::uint64_t data_seed = 1;
  SplitSizes sizes;
  TokenizerConfig tokenizer{TokenizerMode::Word, 8192, 32};
  std::optional<PretrainSpec> pretrain;  // none: from-scratch baseline
  TrainConfig finetune = default_config(Phase::Finetune);
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<Split> eval_splits{Split::Test, Split::Gen};
  int max_decode_len = 64;

  /// Reads run_id, task, arch.*, data.*, tokenizer.*, pretrain.*, finetune.*,
  /// seeds, eval.*. pretrain.corpus = none | simple | complex | external or a
  /// comma list to concatenate.
  static ExperimentConfig from_config(const Config& c);
  void write_to(Config& c) const;
  std::string pretrain_label() const;
};

/// One row of results.csv / checkpoints.csv; step < 0 marks the
/// checkpoint-mean row.
struct ResultRow {
  std::string run_id;
  Task task = Task::Question;
  std::string arch_fingerprint;
  std::int64_t params = 0;
  std::string pretrain_corpus;
  std::size_t pretrain_words = 0;
  std::uint64_t seed = 0;
  Split split = Split::Gen;
  long long step = -1;
  double seq_acc = 0.0;
  double targeted_acc = 0.0;
};

struct SummaryRow {
  std::string run_id;
  Task task = Task::Question;
  std::string arch_fingerprint;
  std::int64_t params = 0;
  std::string pretrain_corpus;
  std::size_t pretrain_words = 0;
  Split split = Split::Gen;
  int seeds = 0;
  double seq_mean = 0.0, seq_std = 0.0;
  double targeted_mean = 0.0, targeted_std = 0.0;
};

struct FailureRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string stage;
  std::string reason;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;         // checkpoint means, one per (seed, split)
  std::vector<ResultRow> checkpoints;  // per checkpoint
  std::vector<SummaryRow> summary;
  std::vector<FailureRow> failures;
};

extern const char* const kResultHeader;
extern const char* const kSummaryHeader;
extern const char* const kFailureHeader;

std::string format_row(const ResultRow& r);
std::string format_summary(const SummaryRow& r);
std::string format_failure(const FailureRow& r);
std::vector<ResultRow> read_results(const std::filesystem::path& csv);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& xs);
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Optional pre-training (shared by all seeds), then per seed: fine-tune,
/// evaluate every checkpoint on the evaluation splits. A failing seed is
/// recorded in failures and the others continue. Writes results.csv,
/// checkpoints.csv, summary.csv, failures.csv and config.snapshot under
/// out_dir. `corpus`, when given, replaces corpus synthesis.
ExperimentResult run_experiment(const ExperimentConfig& config, const Grammar& grammar,
                                const std::filesystem::path& out_dir,
                                const std::vector<std::string>* corpus = nullptr);

/// Builds the pre-training corpus described by spec.
std::vector<std::string> build_pretrain_corpus(const PretrainSpec& spec, const Grammar& grammar);

/// Tokenizer for an experiment: the grammar vocabulary (plus corpus word
/// types when pre-training) in word mode, BPE over corpus and fine-tuning
/// sources in subword mode.
Tokenizer experiment_tokenizer(const TokenizerConfig& config, const Grammar& grammar,
                               const std::vector<std::string>* corpus, const TransformSplits& splits);

void write_results(const ExperimentResult& result, const std::filesystem::path& out_dir);

}  // namespace hierbias
