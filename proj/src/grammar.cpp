#include "hierbias/grammar.hpp"

#include <algorithm>
#include <sstream>

#include "hierbias/errors.hpp"
#include "hierbias/rng.hpp"

namespace hierbias {

namespace {

constexpr std::string_view kBuiltinTable = R"(# Default lexicon.
# surface  pos  number  [participle]  [key=value ...]

the  determiner  n/a
my   determiner  n/a
your determiner  n/a
our  determiner  n/a
her  determiner  n/a

raven        noun sg
ravens       noun pl
newt         noun sg
newts        noun pl
yak          noun sg
yaks         noun pl
salamander   noun sg
salamanders  noun pl
peacock      noun sg
peacocks     noun pl
dog          noun sg
dogs         noun pl
cat          noun sg
cats         noun pl
zebra        noun sg
zebras       noun pl
walrus       noun sg
walruses     noun pl
orangutan    noun sg
orangutans   noun pl
unicorn      noun sg
unicorns     noun pl
vulture      noun sg
vultures     noun pl
quail        noun sg
quails       noun pl
seal         noun sg
seals        noun pl
otter        noun sg
otters       noun pl
llama        noun sg
llamas       noun pl
tiger        noun sg
tigers       noun pl
rabbit       noun sg
rabbits      noun pl
badger       noun sg
badgers      noun pl
hamster      noun sg
hamsters     noun pl
lion         noun sg
lions        noun pl
parrot       noun sg
parrots      noun pl
goat         noun sg
goats        noun pl
monkey       noun sg
monkeys      noun pl
lizard       noun sg
lizards      noun pl

observe    verb-trans n/a observed    past=observed    gerund=observing
applaud    verb-trans n/a applauded   past=applauded   gerund=applauding
see        verb-trans n/a seen        past=saw         gerund=seeing
entertain  verb-trans n/a entertained past=entertained gerund=entertaining
admire     verb-trans n/a admired     past=admired     gerund=admiring
confuse    verb-trans n/a confused    past=confused    gerund=confusing
amuse      verb-trans n/a amused      past=amused      gerund=amusing
accept     verb-trans n/a accepted    past=accepted    gerund=accepting
remember   verb-trans n/a remembered  past=remembered  gerund=remembering
visit      verb-trans n/a visited     past=visited     gerund=visiting

run     verb-intrans n/a past=ran      gerund=running
smile   verb-intrans n/a past=smiled   gerund=smiling
swim    verb-intrans n/a past=swam     gerund=swimming
sleep   verb-intrans n/a past=slept    gerund=sleeping
wait    verb-intrans n/a past=waited   gerund=waiting
giggle  verb-intrans n/a past=giggled  gerund=giggling
laugh   verb-intrans n/a past=laughed  gerund=laughing
move    verb-intrans n/a past=moved    gerund=moving
cry     verb-intrans n/a past=cried    gerund=crying
wander  verb-intrans n/a past=wandered gerund=wandering

does    auxiliary sg   takes=base
do      auxiliary pl   takes=base
doesn't auxiliary sg   takes=base
don't   auxiliary pl   takes=base
can     auxiliary both takes=base
can't   auxiliary both takes=base
is      auxiliary sg   takes=gerund
are     auxiliary pl   takes=gerund
was     auxiliary sg   takes=gerund
were    auxiliary pl   takes=gerund

near    preposition n/a
behind  preposition n/a
around  preposition n/a
beside  preposition n/a
below   preposition n/a

that    relativizer n/a
who     relativizer n/a
)";

constexpr int kPosCount = 8;

PartOfSpeech parse_pos(std::string_view s) {
  if (s == "noun") return PartOfSpeech::Noun;
  if (s == "verb-intrans") return PartOfSpeech::VerbIntrans;
  if (s == "verb-trans") return PartOfSpeech::VerbTrans;
  if (s == "auxiliary") return PartOfSpeech::Auxiliary;
  if (s == "determiner") return PartOfSpeech::Determiner;
  if (s == "preposition") return PartOfSpeech::Preposition;
  if (s == "relativizer") return PartOfSpeech::Relativizer;
  if (s == "passive-participle") return PartOfSpeech::PassiveParticiple;
  throw DataError("unknown part of speech '" + std::string(s) + "'");
}

Number parse_number(std::string_view s) {
  if (s == "sg") return Number::Singular;
  if (s == "pl") return Number::Plural;
  if (s == "both") return Number::Both;
  if (s == "n/a" || s == "-") return Number::None;
  throw DataError("unknown number feature '" + std::string(s) + "'");
}

bool is_verb_pos(PartOfSpeech p) {
  return p == PartOfSpeech::VerbTrans || p == PartOfSpeech::VerbIntrans;
}

}  // namespace

std::string_view to_string(PartOfSpeech pos) {
  switch (pos) {
    case PartOfSpeech::Noun: return "noun";
    case PartOfSpeech::VerbIntrans: return "verb-intrans";
    case PartOfSpeech::VerbTrans: return "verb-trans";
    case PartOfSpeech::Auxiliary: return "auxiliary";
    case PartOfSpeech::Determiner: return "determiner";
    case PartOfSpeech::Preposition: return "preposition";
    case PartOfSpeech::Relativizer: return "relativizer";
    case PartOfSpeech::PassiveParticiple: return "passive-participle";
  }
  return "?";
}

std::string_view to_string(Number number) {
  switch (number) {
    case Number::Singular: return "sg";
    case Number::Plural: return "pl";
    case Number::Both: return "both";
    case Number::None: return "n/a";
  }
  return "?";
}

bool agrees(Number aux, Number subject) {
  if (aux == Number::Both) return subject == Number::Singular || subject == Number::Plural;
  return aux == subject && aux != Number::None;
}

std::string_view to_string(Modifier m) {
  switch (m) {
    case Modifier::None: return "none";
    case Modifier::RelativeClause: return "rc";
    case Modifier::PrepPhrase: return "pp";
  }
  return "?";
}

Modifier parse_modifier(std::string_view s) {
  if (s == "none") return Modifier::None;
  if (s == "rc") return Modifier::RelativeClause;
  if (s == "pp") return Modifier::PrepPhrase;
  throw UsageError("unknown modifier '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Grammar

Grammar Grammar::from_table(std::string_view table) {
  Grammar g;
  std::istringstream in{std::string(table)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const Tokens cols = split_words(line);
    if (cols.empty() || cols[0][0] == '#') continue;
    if (cols.size() < 3) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": expected at least 3 columns");
    }
    LexiconEntry e;
    e.surface = cols[0];
    e.pos = parse_pos(cols[1]);
    e.number = parse_number(cols[2]);
    for (std::size_t c = 3; c < cols.size(); ++c) {
      const auto eq = cols[c].find('=');
      if (eq == std::string::npos) {
        if (c != 3) {
          throw DataError("lexicon line " + std::to_string(line_no) + ": stray column '" + cols[c] + "'");
        }
        e.participle = cols[c];
        continue;
      }
      const std::string key = cols[c].substr(0, eq);
      const std::string value = cols[c].substr(eq + 1);
      if (key == "participle") {
        e.participle = value;
      } else if (key == "past") {
        e.past = value;
      } else if (key == "gerund") {
        e.gerund = value;
      } else if (key == "takes") {
        if (value == "base") {
          e.takes = AuxComplement::Base;
        } else if (value == "gerund") {
          e.takes = AuxComplement::Gerund;
        } else {
          throw DataError("lexicon line " + std::to_string(line_no) + ": bad takes=" + value);
        }
      } else {
        throw DataError("lexicon line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    g.lexicon_.push_back(std::move(e));
  }
  g.rules_ = {
      {"S", {"NP", "VP", "Punct"}},
      {"NP", {"Det", "N"}},
      {"NP", {"Det", "N", "RC"}},
      {"NP", {"Det", "N", "PP"}},
      {"RC", {"Rel", "Aux", "V"}},
      {"RC", {"Rel", "Aux", "V", "NP"}},
      {"PP", {"P", "NP"}},
      {"VP", {"Aux", "V"}},
      {"VP", {"Aux", "V", "NP"}},
      {"VP", {"Vpast"}},
      {"VP", {"Vpast", "NP"}},
  };
  g.validate();
  g.index();
  return g;
}

Grammar Grammar::from_file(const std::filesystem::path& path) {
  return from_table(read_file(path));
}

const Grammar& Grammar::builtin() {
  static const Grammar g = from_table(kBuiltinTable);
  return g;
}

std::string_view Grammar::builtin_table() { return kBuiltinTable; }

std::string Grammar::to_table() const {
  std::ostringstream out;
  for (const auto& e : lexicon_) {
    out << e.surface << ' ' << to_string(e.pos) << ' ' << to_string(e.number);
    if (!e.participle.empty()) out << ' ' << e.participle;
    if (!e.past.empty()) out << " past=" << e.past;
    if (!e.gerund.empty()) out << " gerund=" << e.gerund;
    if (e.pos == PartOfSpeech::Auxiliary) {
      out << " takes=" << (e.takes == AuxComplement::Base ? "base" : "gerund");
    }
    out << '\n';
  }
  return out.str();
}

void Grammar::validate() const {
  bool noun_sg = false, noun_pl = false, aux_sg = false, aux_pl = false;
  bool det = false, verb = false;
  for (const auto& e : lexicon_) {
    switch (e.pos) {
      case PartOfSpeech::Noun:
        if (e.number != Number::Singular && e.number != Number::Plural) {
          throw DataError("noun '" + e.surface + "' needs exactly one number feature");
        }
        (e.number == Number::Singular ? noun_sg : noun_pl) = true;
        break;
      case PartOfSpeech::VerbTrans:
        if (e.participle.empty()) {
          throw DataError("transitive verb '" + e.surface + "' has no participle");
        }
        verb = true;
        break;
      case PartOfSpeech::VerbIntrans:
        verb = true;
        break;
      case PartOfSpeech::Auxiliary:
        if (agrees(e.number, Number::Singular)) aux_sg = true;
        if (agrees(e.number, Number::Plural)) aux_pl = true;
        break;
      case PartOfSpeech::Determiner:
        det = true;
        break;
      default:
        break;
    }
  }
  if (!noun_sg || !noun_pl) throw DataError("lexicon needs singular and plural nouns");
  if (!aux_sg || !aux_pl) throw DataError("lexicon needs auxiliaries for both numbers");
  if (!det) throw DataError("lexicon has no determiner");
  if (!verb) throw DataError("lexicon has no verb");
}

void Grammar::index() {
  by_pos_.assign(kPosCount, {});
  word_index_.clear();
  for (int i = 0; i < static_cast<int>(lexicon_.size()); ++i) {
    const auto& e = lexicon_[i];
    by_pos_[static_cast<int>(e.pos)].push_back(i);
    word_index_.emplace(e.surface, i);
    if (is_verb_pos(e.pos)) {
      for (const auto* form : {&e.participle, &e.past, &e.gerund}) {
        if (!form->empty()) word_index_.emplace(*form, i);
      }
    }
  }
}

const std::vector<int>& Grammar::entries(PartOfSpeech pos) const {
  return by_pos_[static_cast<int>(pos)];
}

const LexiconEntry* Grammar::lookup(std::string_view word) const {
  const auto it = word_index_.find(std::string(word));
  return it == word_index_.end() ? nullptr : &lexicon_[it->second];
}

bool Grammar::is_noun(std::string_view w) const {
  const auto* e = lookup(w);
  return e && e->pos == PartOfSpeech::Noun;
}
bool Grammar::is_auxiliary(std::string_view w) const {
  const auto* e = lookup(w);
  return e && e->pos == PartOfSpeech::Auxiliary;
}
bool Grammar::is_verb(std::string_view w) const {
  const auto* e = lookup(w);
  return e && is_verb_pos(e->pos);
}
bool Grammar::is_determiner(std::string_view w) const {
  const auto* e = lookup(w);
  return e && e->pos == PartOfSpeech::Determiner;
}
bool Grammar::is_preposition(std::string_view w) const {
  const auto* e = lookup(w);
  return e && e->pos == PartOfSpeech::Preposition;
}
bool Grammar::is_relativizer(std::string_view w) const {
  const auto* e = lookup(w);
  return e && e->pos == PartOfSpeech::Relativizer;
}

Number Grammar::noun_number(std::string_view w) const {
  const auto* e = lookup(w);
  if (!e || e->pos != PartOfSpeech::Noun) return Number::None;
  return e->number;
}

std::vector<std::string> Grammar::vocabulary() const {
  std::vector<std::string> out;
  std::unordered_map<std::string, bool> seen;
  auto add = [&](const std::string& w) {
    if (!w.empty() && seen.emplace(w, true).second) out.push_back(w);
  };
  for (const auto& e : lexicon_) {
    add(e.surface);
    add(e.participle);
    add(e.past);
    add(e.gerund);
  }
  add(".");
  add("?");
  add("by");
  return out;
}

Grammar Grammar::extended(std::span<const LexiconEntry> extra) const {
  Grammar g = *this;
  g.lexicon_.insert(g.lexicon_.end(), extra.begin(), extra.end());
  g.validate();
  g.index();
  return g;
}

// ---------------------------------------------------------------------------
// Trees

Tokens ParseTree::leaves() const {
  Tokens out;
  auto walk = [&](auto&& self, const ParseTree& t) -> void {
    if (t.is_leaf()) {
      out.push_back(t.word);
      return;
    }
    for (const auto& c : t.children) self(self, c);
  };
  walk(walk, *this);
  return out;
}

const ParseTree* ParseTree::child(std::string_view child_label) const {
  for (const auto& c : children) {
    if (c.label == child_label) return &c;
  }
  return nullptr;
}

std::string ParseTree::bracketed() const {
  if (is_leaf()) return "(" + label + " " + word + ")";
  std::string out = "(" + label;
  for (const auto& c : children) out += " " + c.bracketed();
  return out + ")";
}

void check_spans(const ParseTree& tree) {
  auto walk = [&](auto&& self, const ParseTree& t) -> void {
    if (t.is_leaf()) {
      if (t.span.end != t.span.begin + 1) throw StructureError("leaf span must cover one token");
      return;
    }
    int pos = t.span.begin;
    for (const auto& c : t.children) {
      if (c.span.begin != pos) throw StructureError("child spans do not partition " + t.label);
      pos = c.span.end;
      self(self, c);
    }
    if (pos != t.span.end) throw StructureError("child spans do not cover " + t.label);
  };
  walk(walk, tree);
  if (tree.span.begin != 0 || tree.span.end != static_cast<int>(tree.leaves().size())) {
    throw StructureError("root span does not match sentence length");
  }
}

namespace {

class Sampler {
 public:
  Sampler(const Grammar& g, std::uint64_t seed, const SampleOptions& opts)
      : g_(g), rng_(seed), opts_(opts) {}

  ParseTree sentence() {
    const bool has_trans = !g_.entries(PartOfSpeech::VerbTrans).empty();
    const bool has_intrans = !g_.entries(PartOfSpeech::VerbIntrans).empty();
    const bool need_object = opts_.require_transitive || opts_.object_modifier != Modifier::None;
    if (need_object && !has_trans) {
      throw GenerationError("options need a transitive verb but the lexicon has none");
    }
    check_modifier_support(opts_.subject_modifier);
    check_modifier_support(opts_.object_modifier);

    ParseTree s{"S", "", {}, {pos_, 0}};
    s.children.push_back(noun_phrase(opts_.subject_modifier, 1));
    const Number subj = g_.noun_number(s.children[0].children[1].word);

    const bool transitive = need_object || !has_intrans || (has_trans && rng_.chance(0.5));
    ParseTree vp{"VP", "", {}, {pos_, 0}};
    if (opts_.verb_form == VerbForm::Auxiliary) {
      const LexiconEntry& aux = pick_aux(subj);
      vp.children.push_back(leaf("Aux", aux.surface));
      const LexiconEntry& verb = pick(transitive ? PartOfSpeech::VerbTrans : PartOfSpeech::VerbIntrans);
      vp.children.push_back(leaf("V", verb_form_after(aux, verb)));
    } else {
      const LexiconEntry& verb = pick(transitive ? PartOfSpeech::VerbTrans : PartOfSpeech::VerbIntrans);
      if (verb.past.empty()) throw GenerationError("verb '" + verb.surface + "' has no past form");
      vp.children.push_back(leaf("V", verb.past));
    }
    if (transitive) vp.children.push_back(noun_phrase(opts_.object_modifier, 1));
    vp.span.end = pos_;
    s.children.push_back(std::move(vp));
    s.children.push_back(leaf("Punct", "."));
    s.span.end = pos_;
    return s;
  }

 private:
  void check_modifier_support(Modifier m) const {
    if (m == Modifier::RelativeClause &&
        (g_.entries(PartOfSpeech::Relativizer).empty() || g_.entries(PartOfSpeech::Auxiliary).empty())) {
      throw GenerationError("relative clause requested but lexicon has no relativizer");
    }
    if (m == Modifier::PrepPhrase && g_.entries(PartOfSpeech::Preposition).empty()) {
      throw GenerationError("prepositional phrase requested but lexicon has no preposition");
    }
  }

  ParseTree leaf(std::string label, std::string word) {
    ParseTree t{std::move(label), std::move(word), {}, {pos_, pos_ + 1}};
    ++pos_;
    return t;
  }

  const LexiconEntry& pick(PartOfSpeech pos) {
    const auto& ids = g_.entries(pos);
    if (ids.empty()) throw GenerationError("lexicon has no " + std::string(to_string(pos)));
    return g_.lexicon()[choose(ids)];
  }

  int choose(const std::vector<int>& ids) {
    if (opts_.entry_weights.empty()) return ids[rng_.below(ids.size())];
    std::vector<double> w;
    w.reserve(ids.size());
    double total = 0.0;
    for (int id : ids) {
      w.push_back(opts_.entry_weights[id]);
      total += w.back();
    }
    if (total <= 0.0) throw GenerationError("all sampling weights are zero for a required category");
    return ids[rng_.weighted(w)];
  }

  const LexiconEntry& pick_aux(Number subject) {
    std::vector<int> ok;
    for (int id : g_.entries(PartOfSpeech::Auxiliary)) {
      if (agrees(g_.lexicon()[id].number, subject)) ok.push_back(id);
    }
    if (ok.empty()) throw GenerationError("no auxiliary agrees with subject");
    return g_.lexicon()[choose(ok)];
  }

  std::string verb_form_after(const LexiconEntry& aux, const LexiconEntry& verb) {
    if (aux.takes == AuxComplement::Gerund) {
      if (verb.gerund.empty()) throw GenerationError("verb '" + verb.surface + "' has no gerund");
      return verb.gerund;
    }
    return verb.surface;
  }

  Modifier random_modifier() {
    const bool rc_ok = !g_.entries(PartOfSpeech::Relativizer).empty();
    const bool pp_ok = !g_.entries(PartOfSpeech::Preposition).empty();
    if (rc_ok && pp_ok) return rng_.chance(0.5) ? Modifier::RelativeClause : Modifier::PrepPhrase;
    if (rc_ok) return Modifier::RelativeClause;
    if (pp_ok) return Modifier::PrepPhrase;
    return Modifier::None;
  }

  ParseTree noun_phrase(Modifier modifier, int depth) {
    ParseTree np{"NP", "", {}, {pos_, 0}};
    np.children.push_back(leaf("Det", pick(PartOfSpeech::Determiner).surface));
    const LexiconEntry& noun = pick(PartOfSpeech::Noun);
    np.children.push_back(leaf("N", noun.surface));
    if (modifier == Modifier::RelativeClause) {
      np.children.push_back(relative_clause(noun.number, depth));
    } else if (modifier == Modifier::PrepPhrase) {
      np.children.push_back(prep_phrase(depth));
    }
    np.span.end = pos_;
    return np;
  }

  Modifier inner_modifier(int depth) {
    if (depth >= opts_.max_depth) return Modifier::None;
    return rng_.chance(opts_.nested_modifier_prob) ? random_modifier() : Modifier::None;
  }

  ParseTree relative_clause(Number head, int depth) {
    ParseTree rc{"RC", "", {}, {pos_, 0}};
    rc.children.push_back(leaf("Rel", pick(PartOfSpeech::Relativizer).surface));
    const LexiconEntry& aux = pick_aux(head);
    rc.children.push_back(leaf("Aux", aux.surface));
    const bool has_trans = !g_.entries(PartOfSpeech::VerbTrans).empty();
    const bool has_intrans = !g_.entries(PartOfSpeech::VerbIntrans).empty();
    const bool transitive = has_trans && (!has_intrans || rng_.chance(0.5));
    const LexiconEntry& verb = pick(transitive ? PartOfSpeech::VerbTrans : PartOfSpeech::VerbIntrans);
    rc.children.push_back(leaf("V", verb_form_after(aux, verb)));
    if (transitive) rc.children.push_back(noun_phrase(inner_modifier(depth), depth + 1));
    rc.span.end = pos_;
    return rc;
  }

  ParseTree prep_phrase(int depth) {
    ParseTree pp{"PP", "", {}, {pos_, 0}};
    pp.children.push_back(leaf("P", pick(PartOfSpeech::Preposition).surface));
    pp.children.push_back(noun_phrase(inner_modifier(depth), depth + 1));
    pp.span.end = pos_;
    return pp;
  }

  const Grammar& g_;
  Rng rng_;
  const SampleOptions& opts_;
  int pos_ = 0;
};

}  // namespace

ParseTree sample_declarative(const Grammar& grammar, std::uint64_t seed,
                             const SampleOptions& opts) {
  return Sampler(grammar, seed, opts).sentence();
}

namespace {

class Parser {
 public:
  Parser(const Tokens& t, const Grammar& g) : t_(t), g_(g) {}

  ParseTree sentence() {
    ParseTree s{"S", "", {}, {0, 0}};
    s.children.push_back(noun_phrase());
    ParseTree vp{"VP", "", {}, {pos_, 0}};
    if (g_.is_auxiliary(peek())) vp.children.push_back(take("Aux"));
    if (!g_.is_verb(peek())) fail("verb");
    const bool transitive = g_.lookup(peek())->pos == PartOfSpeech::VerbTrans;
    vp.children.push_back(take("V"));
    if (transitive && g_.is_determiner(peek())) vp.children.push_back(noun_phrase());
    vp.span.end = pos_;
    s.children.push_back(std::move(vp));
    if (peek() != ".") fail("'.'");
    s.children.push_back(take("Punct"));
    if (pos_ != static_cast<int>(t_.size())) fail("end of sentence");
    s.span.end = pos_;
    return s;
  }

 private:
  std::string_view peek() const {
    return pos_ < static_cast<int>(t_.size()) ? std::string_view(t_[pos_]) : std::string_view();
  }

  [[noreturn]] void fail(std::string_view expected) const {
    throw StructureError("parse error at token " + std::to_string(pos_) + ": expected " +
                         std::string(expected) + ", got '" + std::string(peek()) + "'");
  }

  ParseTree take(std::string label) {
    ParseTree leaf{std::move(label), t_[pos_], {}, {pos_, pos_ + 1}};
    ++pos_;
    return leaf;
  }

  ParseTree noun_phrase() {
    ParseTree np{"NP", "", {}, {pos_, 0}};
    if (!g_.is_determiner(peek())) fail("determiner");
    np.children.push_back(take("Det"));
    if (!g_.is_noun(peek())) fail("noun");
    np.children.push_back(take("N"));
    if (g_.is_relativizer(peek())) {
      ParseTree rc{"RC", "", {}, {pos_, 0}};
      rc.children.push_back(take("Rel"));
      if (!g_.is_auxiliary(peek())) fail("auxiliary");
      rc.children.push_back(take("Aux"));
      if (!g_.is_verb(peek())) fail("verb");
      const bool transitive = g_.lookup(peek())->pos == PartOfSpeech::VerbTrans;
      rc.children.push_back(take("V"));
      if (transitive && g_.is_determiner(peek())) rc.children.push_back(noun_phrase());
      rc.span.end = pos_;
      np.children.push_back(std::move(rc));
    } else if (g_.is_preposition(peek())) {
      ParseTree pp{"PP", "", {}, {pos_, 0}};
      pp.children.push_back(take("P"));
      pp.children.push_back(noun_phrase());
      pp.span.end = pos_;
      np.children.push_back(std::move(pp));
    }
    np.span.end = pos_;
    return np;
  }

  const Tokens& t_;
  const Grammar& g_;
  int pos_ = 0;
};

}  // namespace

ParseTree parse_declarative(const Tokens& tokens, const Grammar& grammar) {
  return Parser(tokens, grammar).sentence();
}

bool agreement_holds(const ParseTree& tree, const Grammar& grammar) {
  auto aux_ok = [&](const ParseTree& aux_leaf, const ParseTree& verb_leaf, Number subject) {
    const LexiconEntry* aux = grammar.lookup(aux_leaf.word);
    const LexiconEntry* verb = grammar.lookup(verb_leaf.word);
    if (!aux || !verb || aux->pos != PartOfSpeech::Auxiliary) return false;
    if (!agrees(aux->number, subject)) return false;
    const std::string& expected = aux->takes == AuxComplement::Gerund ? verb->gerund : verb->surface;
    return verb_leaf.word == expected;
  };
  bool ok = true;
  auto walk = [&](auto&& self, const ParseTree& t) -> void {
    if (t.label == "S") {
      const Number subj = grammar.noun_number(t.children.at(0).children.at(1).word);
      const ParseTree& vp = t.children.at(1);
      if (vp.children.size() >= 2 && vp.children[0].label == "Aux") {
        ok = ok && aux_ok(vp.children[0], vp.children[1], subj);
      }
    } else if (t.label == "NP") {
      if (const ParseTree* rc = t.child("RC")) {
        const Number head = grammar.noun_number(t.children.at(1).word);
        ok = ok && aux_ok(rc->children.at(1), rc->children.at(2), head);
      }
    }
    for (const auto& c : t.children) self(self, c);
  };
  walk(walk, tree);
  return ok;
}

const ParseTree& subject_np(const ParseTree& tree) {
  if (tree.label != "S" || tree.children.empty() || tree.children[0].label != "NP") {
    throw StructureError("tree has no main-clause subject");
  }
  return tree.children[0];
}

const ParseTree& main_vp(const ParseTree& tree) {
  const ParseTree* vp = tree.label == "S" ? tree.child("VP") : nullptr;
  if (!vp) throw StructureError("tree has no main-clause verb phrase");
  return *vp;
}

const ParseTree& object_np(const ParseTree& tree) {
  const ParseTree* np = main_vp(tree).child("NP");
  if (!np) throw StructureError("main clause has no direct object");
  return *np;
}

int head_noun_index(const ParseTree& np) {
  const ParseTree* n = np.child("N");
  if (!n) throw StructureError("noun phrase has no head noun");
  return n->span.begin;
}

int main_aux_index(const ParseTree& tree) {
  const ParseTree* aux = main_vp(tree).child("Aux");
  if (!aux) throw StructureError("main clause has no auxiliary");
  return aux->span.begin;
}

int main_verb_index(const ParseTree& tree) {
  const ParseTree* v = main_vp(tree).child("V");
  if (!v) throw StructureError("main clause has no verb");
  return v->span.begin;
}

int object_index(const ParseTree& tree) { return head_noun_index(object_np(tree)); }

int nth_aux_index(const Tokens& tokens, const Grammar& grammar, int n) {
  int seen = 0;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (grammar.is_auxiliary(tokens[i]) && ++seen == n) return i;
  }
  throw StructureError("sequence has fewer than " + std::to_string(n) + " auxiliaries");
}

int first_aux_index(const Tokens& tokens, const Grammar& grammar) {
  return nth_aux_index(tokens, grammar, 1);
}

int nth_noun_index(const Tokens& tokens, const Grammar& grammar, int n) {
  int seen = 0;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (grammar.is_noun(tokens[i]) && ++seen == n) return i;
  }
  throw StructureError("sequence has fewer than " + std::to_string(n) + " nouns");
}

int count_auxiliaries(const Tokens& tokens, const Grammar& grammar) {
  return static_cast<int>(std::count_if(tokens.begin(), tokens.end(),
                                        [&](const auto& w) { return grammar.is_auxiliary(w); }));
}

int count_nouns(const Tokens& tokens, const Grammar& grammar) {
  return static_cast<int>(std::count_if(tokens.begin(), tokens.end(),
                                        [&](const auto& w) { return grammar.is_noun(w); }));
}

}  // namespace hierbias
