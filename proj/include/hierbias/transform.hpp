#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hierbias/grammar.hpp"

namespace hierbias {

enum class Task { Question, Passive };
enum class Hypothesis { Hierarchical, Linear };

std::string_view to_string(Task task);
Task parse_task(std::string_view s);

/// A named transformation hypothesis. Hierarchical rules read the parse tree;
/// linear rules see only the token sequence.
struct TransformRule {
  Task task;
  Hypothesis hypothesis;
  std::string name;
  std::string description;
};

const std::vector<TransformRule>& transform_rules();

/// Fronts the main-clause auxiliary and swaps "." for "?".
Tokens move_main_question(const ParseTree& tree);

/// Fronts the linearly first auxiliary (deleting it from its source
/// position) and swaps "." for "?".
Tokens move_first_question(const Tokens& tokens, const Grammar& grammar);

/// Object NP (with modifiers) + was/were + participle + "by" + subject NP.
Tokens passivize_main(const ParseTree& tree, const Grammar& grammar);

/// Linear analog of passivize_main: fronts the NP headed by the second noun
/// (its determiner through any material before the next verb, auxiliary or
/// terminator) and demotes only determiner + first noun into the by-phrase.
Tokens passivize_second(const Tokens& tokens, const Grammar& grammar);

/// Applies a rule by CLI name ("move-main", "move-first", "move-second").
/// Hierarchical rules parse the source first.
Tokens apply_rule(std::string_view rule, Task task, const Tokens& source,
                  const Grammar& grammar);

}  // namespace hierbias
