#include "hierbias/transform.hpp"

#include "hierbias/errors.hpp"

namespace hierbias {

std::string_view to_string(Task task) {
  return task == Task::Question ? "quest" : "passiv";
}

Task parse_task(std::string_view s) {
  if (s == "quest" || s == "question") return Task::Question;
  if (s == "passiv" || s == "passive") return Task::Passive;
  throw UsageError("unknown task '" + std::string(s) + "' (expected quest or passiv)");
}

const std::vector<TransformRule>& transform_rules() {
  static const std::vector<TransformRule> rules = {
      {Task::Question, Hypothesis::Hierarchical, "move-main",
       "front the auxiliary of the main clause"},
      {Task::Question, Hypothesis::Linear, "move-first",
       "front the linearly first auxiliary"},
      {Task::Passive, Hypothesis::Hierarchical, "move-main",
       "front the direct object of the main clause"},
      {Task::Passive, Hypothesis::Linear, "move-second",
       "front the noun phrase of the linearly second noun"},
  };
  return rules;
}

namespace {

Tokens front_and_question(const Tokens& tokens, int aux) {
  if (tokens.empty() || tokens.back() != ".") {
    throw StructureError("declarative must end with '.'");
  }
  Tokens out;
  out.reserve(tokens.size());
  out.push_back(tokens[aux]);
  for (int i = 0; i < static_cast<int>(tokens.size()) - 1; ++i) {
    if (i != aux) out.push_back(tokens[i]);
  }
  out.push_back("?");
  return out;
}

std::string passive_aux(Number n) { return n == Number::Plural ? "were" : "was"; }

const std::string& participle_of(const std::string& verb, const Grammar& grammar) {
  const LexiconEntry* e = grammar.lookup(verb);
  if (!e || e->pos != PartOfSpeech::VerbTrans || e->participle.empty()) {
    throw StructureError("'" + verb + "' is not a transitive verb");
  }
  return e->participle;
}

int np_start(const Tokens& tokens, int noun, const Grammar& grammar) {
  int start = noun;
  while (start > 0 && grammar.is_determiner(tokens[start - 1])) --start;
  return start;
}

}  // namespace

Tokens move_main_question(const ParseTree& tree) {
  return front_and_question(tree.leaves(), main_aux_index(tree));
}

Tokens move_first_question(const Tokens& tokens, const Grammar& grammar) {
  return front_and_question(tokens, first_aux_index(tokens, grammar));
}

Tokens passivize_main(const ParseTree& tree, const Grammar& grammar) {
  const ParseTree& obj = object_np(tree);
  const Tokens all = tree.leaves();
  const std::string& verb = all[main_verb_index(tree)];
  Tokens out = obj.leaves();
  out.push_back(passive_aux(grammar.noun_number(all[head_noun_index(obj)])));
  out.push_back(participle_of(verb, grammar));
  out.push_back("by");
  for (auto& w : subject_np(tree).leaves()) out.push_back(std::move(w));
  out.push_back(all.back());
  return out;
}

Tokens passivize_second(const Tokens& tokens, const Grammar& grammar) {
  if (tokens.empty()) throw StructureError("empty sequence");
  const int first = nth_noun_index(tokens, grammar, 1);
  const int second = nth_noun_index(tokens, grammar, 2);
  const int n = static_cast<int>(tokens.size());
  const int start = np_start(tokens, second, grammar);
  int end = second + 1;
  while (end < n && !grammar.is_verb(tokens[end]) && !grammar.is_auxiliary(tokens[end]) &&
         tokens[end] != "." && tokens[end] != "?") {
    ++end;
  }
  int verb = -1;
  for (int i = 0; i < n; ++i) {
    if ((i < start || i >= end) && grammar.is_verb(tokens[i])) {
      verb = i;
      break;
    }
  }
  if (verb < 0) throw StructureError("sequence has no verb outside the fronted phrase");

  Tokens out(tokens.begin() + start, tokens.begin() + end);
  out.push_back(passive_aux(grammar.noun_number(tokens[second])));
  out.push_back(participle_of(tokens[verb], grammar));
  out.push_back("by");
  for (int i = np_start(tokens, first, grammar); i <= first; ++i) out.push_back(tokens[i]);
  out.push_back(tokens.back());
  return out;
}

Tokens apply_rule(std::string_view rule, Task task, const Tokens& source,
                  const Grammar& grammar) {
  if (rule == "move-main") {
    const ParseTree tree = parse_declarative(source, grammar);
    return task == Task::Question ? move_main_question(tree) : passivize_main(tree, grammar);
  }
  if (rule == "move-first" && task == Task::Question) return move_first_question(source, grammar);
  if (rule == "move-second" && task == Task::Passive) return passivize_second(source, grammar);
  throw UsageError("rule '" + std::string(rule) + "' does not apply to task " +
                   std::string(to_string(task)));
}

}  // namespace hierbias
