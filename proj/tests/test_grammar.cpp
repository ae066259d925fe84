#include "doctest.h"

#include "hierbias/errors.hpp"
#include "hierbias/grammar.hpp"

using namespace hierbias;

namespace {

const Grammar& g() { return Grammar::builtin(); }

// Independent oracle: walk the tree and return the Aux leaf that is a direct
// child of the root's VP, by label path rather than via main_aux_index.
int aux_under_root_vp(const ParseTree& t) {
  for (const auto& c : t.children) {
    if (c.label != "VP") continue;
    for (const auto& leaf : c.children) {
      if (leaf.label == "Aux") return leaf.span.begin;
    }
  }
  return -1;
}

SampleOptions opts(Modifier subj, Modifier obj, bool trans, VerbForm form = VerbForm::Auxiliary) {
  SampleOptions o;
  o.subject_modifier = subj;
  o.object_modifier = obj;
  o.require_transitive = trans;
  o.verb_form = form;
  return o;
}

}  // namespace

TEST_CASE("builtin lexicon satisfies entry invariants") {
  int nouns = 0, trans = 0, intrans = 0;
  for (const auto& e : g().lexicon()) {
    if (e.pos == PartOfSpeech::Noun) {
      ++nouns;
      CHECK((e.number == Number::Singular || e.number == Number::Plural));
    }
    if (e.pos == PartOfSpeech::VerbTrans) {
      ++trans;
      CHECK_FALSE(e.participle.empty());
    }
    if (e.pos == PartOfSpeech::VerbIntrans) ++intrans;
  }
  CHECK(nouns == 50);
  CHECK(trans + intrans == 20);
  CHECK(g().is_auxiliary("doesn't"));
  CHECK(g().lookup("saw")->surface == "see");
  CHECK(g().lookup("seen")->surface == "see");
}

TEST_CASE("lexicon table round-trips and rejects malformed entries") {
  const Grammar again = Grammar::from_table(g().to_table());
  CHECK(again.lexicon().size() == g().lexicon().size());
  CHECK(again.vocabulary() == g().vocabulary());

  CHECK_THROWS_AS(Grammar::from_table("the determiner n/a\nx noun sg\nxs noun pl\n"
                                      "does auxiliary sg\ndo auxiliary pl\nsee verb-trans n/a\n"),
                  DataError);
  CHECK_THROWS_AS(Grammar::from_table("the determiner n/a\nx noun n/a\n"), DataError);
  CHECK_THROWS_AS(Grammar::from_table("x flurb sg\n"), DataError);
}

TEST_CASE("sampling is deterministic per seed") {
  const auto o = opts(Modifier::RelativeClause, Modifier::PrepPhrase, true);
  CHECK(sample_declarative(g(), 17, o) == sample_declarative(g(), 17, o));
  CHECK(sample_declarative(g(), 17, o).bracketed() == sample_declarative(g(), 17, o).bracketed());
  bool differs = false;
  for (std::uint64_t s = 0; s < 10 && !differs; ++s) {
    differs = !(sample_declarative(g(), s, o) == sample_declarative(g(), 17, o));
  }
  CHECK(differs);
}

TEST_CASE("unmodified transitive sample has the expected shape") {
  const ParseTree t = sample_declarative(g(), 0, opts(Modifier::None, Modifier::None, true));
  const Tokens w = t.leaves();
  REQUIRE(w.size() == 7);  // det noun aux verb det noun .
  CHECK(g().is_determiner(w[0]));
  CHECK(g().is_noun(w[1]));
  CHECK(g().is_auxiliary(w[2]));
  CHECK(g().is_verb(w[3]));
  CHECK(w[6] == ".");
  check_spans(t);
  CHECK(agreement_holds(t, g()));
}

TEST_CASE("sampled trees hold invariants across option combinations") {
  const Modifier mods[] = {Modifier::None, Modifier::RelativeClause, Modifier::PrepPhrase};
  for (Modifier subj : mods) {
    for (Modifier obj : mods) {
      for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const ParseTree t = sample_declarative(g(), seed, opts(subj, obj, false));
        const Tokens w = t.leaves();
        CAPTURE(join_words(w));
        check_spans(t);
        CHECK(agreement_holds(t, g()));
        CHECK(parse_declarative(w, g()) == t);
        CHECK(main_aux_index(t) == aux_under_root_vp(t));

        const ParseTree& subject = subject_np(t);
        const bool has_rel = subject.child("RC") != nullptr;
        CHECK(has_rel == (subj == Modifier::RelativeClause));
        CHECK((subject.child("PP") != nullptr) == (subj == Modifier::PrepPhrase));
        if (obj != Modifier::None) {
          const ParseTree& o = object_np(t);
          CHECK((o.child("RC") != nullptr) == (obj == Modifier::RelativeClause));
        }

        if (subj == Modifier::None) {
          CHECK(main_aux_index(t) == first_aux_index(w, g()));
          if (main_vp(t).child("NP")) CHECK(object_index(t) == nth_noun_index(w, g(), 2));
        }
        if (subj == Modifier::RelativeClause) {
          CHECK(main_aux_index(t) == nth_aux_index(w, g(), 2));
          CHECK(main_aux_index(t) != first_aux_index(w, g()));
        }
        if (subj == Modifier::PrepPhrase && main_vp(t).child("NP")) {
          CHECK(object_index(t) == nth_noun_index(w, g(), 3));
        }
      }
    }
  }
}

TEST_CASE("subject relative clause contains a relativizer leaf") {
  const ParseTree t = sample_declarative(g(), 3, opts(Modifier::RelativeClause, Modifier::None, false));
  bool found = false;
  for (const auto& w : subject_np(t).leaves()) found = found || g().is_relativizer(w);
  CHECK(found);
}

TEST_CASE("past-form sentences have no auxiliary") {
  const ParseTree t = sample_declarative(g(), 5, opts(Modifier::PrepPhrase, Modifier::None, true, VerbForm::Past));
  CHECK(count_auxiliaries(t.leaves(), g()) == 0);
  CHECK_THROWS_AS(main_aux_index(t), StructureError);
  CHECK(object_index(t) == nth_noun_index(t.leaves(), g(), 3));
}

TEST_CASE("auxiliary queries on the relative-clause example") {
  const Tokens w = tokenize_sentence("the newt that can see the dog does run .");
  const ParseTree t = parse_declarative(w, g());
  CHECK(main_aux_index(t) == 7);
  CHECK(w[main_aux_index(t)] == "does");
  CHECK(first_aux_index(w, g()) == 3);

  const Tokens simple = tokenize_sentence("the raven does observe the newts .");
  CHECK(main_aux_index(parse_declarative(simple, g())) == 2);
  CHECK(first_aux_index(simple, g()) == 2);

  CHECK_THROWS_AS(first_aux_index(Tokens{}, g()), StructureError);
  CHECK_THROWS_AS(first_aux_index(Tokens{"the", "raven", "ran", "."}, g()), StructureError);
}

TEST_CASE("object and noun-ordinal queries on the passivization examples") {
  const Tokens train = tokenize_sentence("The raven observed the newts near the yak.");
  const ParseTree tt = parse_declarative(train, g());
  CHECK(train[object_index(tt)] == "newts");
  CHECK(object_index(tt) == nth_noun_index(train, g(), 2));

  const Tokens gen = tokenize_sentence("The salamander behind the ravens applauded the peacock.");
  const ParseTree gt = parse_declarative(gen, g());
  CHECK(gen[object_index(gt)] == "peacock");
  CHECK(object_index(gt) == nth_noun_index(gen, g(), 3));
  CHECK_THROWS_AS(nth_noun_index(gen, g(), 4), StructureError);
}

TEST_CASE("unsatisfiable options raise a generation error") {
  const Grammar intrans_only = Grammar::from_table(
      "the determiner n/a\ncat noun sg\ncats noun pl\ndoes auxiliary sg\ndo auxiliary pl\n"
      "run verb-intrans n/a past=ran\nthat relativizer n/a\n");
  CHECK_THROWS_AS(sample_declarative(intrans_only, 1, opts(Modifier::None, Modifier::RelativeClause, false)),
                  GenerationError);
  CHECK_THROWS_AS(sample_declarative(intrans_only, 1, opts(Modifier::None, Modifier::None, true)),
                  GenerationError);
  CHECK_THROWS_AS(sample_declarative(intrans_only, 1, opts(Modifier::PrepPhrase, Modifier::None, false)),
                  GenerationError);
  CHECK_NOTHROW(sample_declarative(intrans_only, 1, opts(Modifier::RelativeClause, Modifier::None, false)));
}

TEST_CASE("nested modifiers respect the configured depth") {
  SampleOptions o = opts(Modifier::RelativeClause, Modifier::PrepPhrase, true);
  o.max_depth = 2;
  o.nested_modifier_prob = 1.0;
  int max_nps = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const ParseTree t = sample_declarative(g(), seed, o);
    check_spans(t);
    CHECK(agreement_holds(t, g()));
    CHECK(parse_declarative(t.leaves(), g()) == t);
    int nps = 0;
    auto walk = [&](auto&& self, const ParseTree& n, int depth) -> void {
      if (n.label == "NP") {
        ++nps;
        CHECK(depth <= 3);
      }
      for (const auto& c : n.children) self(self, c, depth + (n.label == "NP"));
    };
    walk(walk, t, 0);
    max_nps = std::max(max_nps, nps);
  }
  CHECK(max_nps > 3);
}

TEST_CASE("parser rejects non-derivable sequences") {
  CHECK_THROWS_AS(parse_declarative(tokenize_sentence("raven the does run ."), g()), StructureError);
  CHECK_THROWS_AS(parse_declarative(tokenize_sentence("the raven does run"), g()), StructureError);
  CHECK_THROWS_AS(parse_declarative(tokenize_sentence("the raven does run . ."), g()), StructureError);
}
