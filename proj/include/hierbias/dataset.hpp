#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierbias/grammar.hpp"
#include "hierbias/transform.hpp"

namespace hierbias {

enum class Split { Train, Test, Gen };

std::string_view to_string(Split split);
Split parse_split(std::string_view s);

/// Positional ground truth for one example. Indices refer to source tokens;
/// -1 means "not applicable" (e.g. no auxiliary in a past-tense sentence).
struct ExampleMeta {
  int main_aux_idx = -1;
  int first_aux_idx = -1;
  int second_aux_idx = -1;
  int object_idx = -1;
  int nth_noun_idx = -1;  // linearly second noun (the MOVE-SECOND target)
  int third_noun_idx = -1;
  Modifier subject_modifier = Modifier::None;
};

struct TransformExample {
  Tokens source;
  Tokens target;
  Task task = Task::Question;
  Split split = Split::Train;
  ExampleMeta meta;

  /// Gold word the targeted metric checks: the main auxiliary (question) or
  /// the object head noun (passive).
  const std::string& gold_targeted_word() const;
};

struct SplitSizes {
  std::size_t n_train = 10000;
  std::size_t n_test = 1000;
  std::size_t n_gen = 1000;
};

struct TransformSplits {
  Task task = Task::Question;
  std::vector<TransformExample> train;
  std::vector<TransformExample> test;
  std::vector<TransformExample> gen;

  const std::vector<TransformExample>& get(Split s) const;
};

/// Samples deduplicated examples: train/test from the ambiguous distribution
/// (no subject modifier), gen with a subject RC (question) or PP (passive).
/// Throws GenerationError when the grammar cannot supply enough distinct
/// examples.
TransformSplits build_transform_splits(Task task, const Grammar& grammar,
                                       const SplitSizes& sizes, std::uint64_t seed);

/// Throws DataError describing the first violated invariant.
void validate_example(const TransformExample& ex, const Grammar& grammar);

/// Files: <dir>/<task>_<split>.tsv (source<TAB>target) and
/// <dir>/<task>_<split>.meta.jsonl.
std::filesystem::path split_path(const std::filesystem::path& dir, Task task, Split split);
std::filesystem::path meta_path(const std::filesystem::path& dir, Task task, Split split);
void write_splits(const TransformSplits& splits, const std::filesystem::path& dir);
std::vector<TransformExample> read_split(const std::filesystem::path& dir, Task task, Split split);

// ---------------------------------------------------------------------------
// Pre-training corpora

enum class Register { Simple, Complex, External };

std::string_view to_string(Register r);
Register parse_register(std::string_view s);

struct CorpusSpec {
  Register reg = Register::Simple;
  std::size_t size_words = 100000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> source_path;
};

/// Words are whitespace-separated tokens, punctuation included.
std::size_t count_words(const std::string& line);
std::size_t count_words(const std::vector<std::string>& lines);

/// Newline-free sentences totaling at least spec.size_words words. The
/// simple register draws short declaratives, polar questions and past-tense
/// sentences from a reduced vocabulary without embedded clauses; the complex
/// register nests RC/PP modifiers up to depth 2 over a vocabulary ten times
/// larger with a Zipfian tail. External copies normalized lines from
/// spec.source_path.
std::vector<std::string> synth_corpus(const CorpusSpec& spec, const Grammar& grammar);

/// Word-for-word lexicon the complex register samples from.
Grammar complex_register_grammar(const Grammar& base);

/// Uniform sentence-level subsamples with nesting: every line of a smaller
/// result also appears in every larger one. Lines keep corpus order.
std::vector<std::vector<std::string>> subsample_nested(const std::vector<std::string>& corpus,
                                                       const std::vector<std::size_t>& sizes,
                                                       std::uint64_t seed);

/// a followed by b, then shuffled deterministically by seed.
std::vector<std::string> concat_corpora(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b, std::uint64_t seed);

struct CorpusStats {
  std::size_t words = 0;
  std::size_t sentences = 0;
  double mean_length = 0.0;
  double median_length = 0.0;
  double type_token_ratio = 0.0;
  std::size_t vocab_size = 0;
};

CorpusStats corpus_stats(const std::vector<std::string>& lines);

}  // namespace hierbias
