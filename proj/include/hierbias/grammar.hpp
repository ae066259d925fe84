#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hierbias/text.hpp"

namespace hierbias {

enum class PartOfSpeech {
  Noun,
  VerbIntrans,
  VerbTrans,
  Auxiliary,
  Determiner,
  Preposition,
  Relativizer,
  PassiveParticiple,
};

enum class Number { None, Singular, Plural, Both };

/// Verb form an auxiliary selects: "does see" vs "is seeing".
enum class AuxComplement { Base, Gerund };

struct LexiconEntry {
  std::string surface;
  PartOfSpeech pos = PartOfSpeech::Noun;
  Number number = Number::None;
  std::string participle;
  std::string past;
  std::string gerund;
  AuxComplement takes = AuxComplement::Base;
};

std::string_view to_string(PartOfSpeech pos);
std::string_view to_string(Number number);

/// Whether an auxiliary marked `aux` may take a subject of number `subject`.
bool agrees(Number aux, Number subject);

struct Production {
  std::string lhs;
  std::vector<std::string> rhs;
};

/// Lexicon plus the fixed production set
///
///   S  -> NP VP Punct
///   NP -> Det N | Det N RC | Det N PP
///   RC -> Rel Aux V | Rel Aux V NP
///   PP -> P NP
///   VP -> Aux V | Aux V NP | Vpast | Vpast NP
///
/// Modifiers nest only up to the sampler's configured depth, so the language
/// is finite.
class Grammar {
 public:
  /// Parses the plain-text lexicon table. One entry per line:
  ///
  ///   surface  pos  number  [participle]  [key=value ...]
  ///
  /// pos is one of noun, verb-intrans, verb-trans, auxiliary, determiner,
  /// preposition, relativizer; number is sg, pl, both or n/a. Recognized keys
  /// are participle, past, gerund and takes (base|gerund, auxiliaries only).
  /// Blank lines and lines starting with '#' are ignored.
  static Grammar from_table(std::string_view table);
  static Grammar from_file(const std::filesystem::path& path);

  /// The default lexicon compiled into the library.
  static const Grammar& builtin();
  static std::string_view builtin_table();

  std::string to_table() const;

  const std::vector<LexiconEntry>& lexicon() const { return lexicon_; }
  const std::vector<Production>& rules() const { return rules_; }

  /// Entry indices by part of speech.
  const std::vector<int>& entries(PartOfSpeech pos) const;

  bool is_noun(std::string_view word) const;
  bool is_auxiliary(std::string_view word) const;
  /// True for any verb form (base, past, participle, gerund).
  bool is_verb(std::string_view word) const;
  bool is_determiner(std::string_view word) const;
  bool is_preposition(std::string_view word) const;
  bool is_relativizer(std::string_view word) const;

  Number noun_number(std::string_view word) const;
  /// Lexicon entry of the word (for verbs: the lemma entry of any form).
  /// Null when unknown.
  const LexiconEntry* lookup(std::string_view word) const;

  /// Every surface form the grammar can emit, including ".", "?" and "by",
  /// in a stable order.
  std::vector<std::string> vocabulary() const;

  /// Returns a copy with extra entries appended (used by the complex
  /// register to widen the vocabulary).
  Grammar extended(std::span<const LexiconEntry> extra) const;

 private:
  Grammar() = default;
  void index();
  void validate() const;

  std::vector<LexiconEntry> lexicon_;
  std::vector<Production> rules_;
  std::vector<std::vector<int>> by_pos_;
  std::unordered_map<std::string, int> word_index_;
};

enum class Modifier { None, RelativeClause, PrepPhrase };
enum class VerbForm { Auxiliary, Past };

std::string_view to_string(Modifier m);
Modifier parse_modifier(std::string_view s);

struct SampleOptions {
  Modifier subject_modifier = Modifier::None;
  Modifier object_modifier = Modifier::None;
  bool require_transitive = false;
  VerbForm verb_form = VerbForm::Auxiliary;
  /// Modifier nesting depth. 1 means the NPs inside a modifier are bare.
  int max_depth = 1;
  /// Probability that an NP inside a modifier receives its own modifier
  /// (only consulted when max_depth > 1).
  double nested_modifier_prob = 0.0;
  /// Optional per-entry sampling weights (indexed like lexicon()); empty
  /// means uniform within each part of speech.
  std::span<const double> entry_weights;
};

struct Span {
  int begin = 0;
  int end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// Constituency tree. Leaves carry a word; internal nodes carry children.
/// Labels: S NP VP RC PP Det N Aux V P Rel Punct.
struct ParseTree {
  std::string label;
  std::string word;
  std::vector<ParseTree> children;
  Span span;

  bool is_leaf() const { return children.empty(); }
  Tokens leaves() const;
  const ParseTree* child(std::string_view child_label) const;
  std::string bracketed() const;

  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

ParseTree sample_declarative(const Grammar& grammar, std::uint64_t seed,
                             const SampleOptions& opts);

/// Recovers the tree of a declarative token sequence produced by this
/// grammar. The grammar is unambiguous (one modifier per NP, PPs attach to
/// nouns), so greedy descent finds the unique parse. Throws StructureError
/// when the tokens are not derivable.
ParseTree parse_declarative(const Tokens& tokens, const Grammar& grammar);

/// Checks leaf/span consistency; throws StructureError on violation.
void check_spans(const ParseTree& tree);

/// Subject-auxiliary agreement and auxiliary complement form in every clause.
bool agreement_holds(const ParseTree& tree, const Grammar& grammar);

const ParseTree& subject_np(const ParseTree& tree);
const ParseTree& main_vp(const ParseTree& tree);
/// Direct object NP of the main clause; throws StructureError if absent.
const ParseTree& object_np(const ParseTree& tree);
int head_noun_index(const ParseTree& np);

int main_aux_index(const ParseTree& tree);
int main_verb_index(const ParseTree& tree);
int object_index(const ParseTree& tree);

int first_aux_index(const Tokens& tokens, const Grammar& grammar);
/// 1-based ordinal; throws StructureError if fewer than n auxiliaries.
int nth_aux_index(const Tokens& tokens, const Grammar& grammar, int n);
int nth_noun_index(const Tokens& tokens, const Grammar& grammar, int n);
int count_auxiliaries(const Tokens& tokens, const Grammar& grammar);
int count_nouns(const Tokens& tokens, const Grammar& grammar);

}  // namespace hierbias
