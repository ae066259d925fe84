#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "hierbias/dataset.hpp"
#include "hierbias/errors.hpp"

using namespace hierbias;

namespace {

const Grammar& g() { return Grammar::builtin(); }

SplitSizes small_sizes() { return {400, 100, 100}; }

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hierbias_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// Independent positional oracle: index of the n-th word satisfying pred.
template <class Pred>
int nth_where(const Tokens& t, int n, Pred pred) {
  for (int i = 0; i < static_cast<int>(t.size()); ++i) {
    if (pred(t[i]) && --n == 0) return i;
  }
  return -1;
}

}  // namespace

TEST_CASE("splits have requested sizes and are deterministic") {
  for (Task task : {Task::Question, Task::Passive}) {
    const auto a = build_transform_splits(task, g(), small_sizes(), 5);
    const auto b = build_transform_splits(task, g(), small_sizes(), 5);
    CHECK(a.train.size() == 400);
    CHECK(a.test.size() == 100);
    CHECK(a.gen.size() == 100);
    for (Split s : {Split::Train, Split::Test, Split::Gen}) {
      REQUIRE(a.get(s).size() == b.get(s).size());
      for (std::size_t i = 0; i < a.get(s).size(); ++i) CHECK(a.get(s)[i].source == b.get(s)[i].source);
    }
    const auto c = build_transform_splits(task, g(), small_sizes(), 6);
    CHECK(c.train[0].source != a.train[0].source);
  }
}

TEST_CASE("sources are unique across all splits") {
  for (Task task : {Task::Question, Task::Passive}) {
    const auto sp = build_transform_splits(task, g(), small_sizes(), 11);
    std::set<Tokens> seen;
    for (Split s : {Split::Train, Split::Test, Split::Gen}) {
      for (const auto& ex : sp.get(s)) CHECK(seen.insert(ex.source).second);
    }
  }
}

TEST_CASE("question splits: train is ambiguous, gen separates the hypotheses") {
  const auto sp = build_transform_splits(Task::Question, g(), small_sizes(), 3);
  auto is_aux = [](const std::string& w) { return g().is_auxiliary(w); };
  for (const auto& ex : sp.train) {
    CHECK_NOTHROW(validate_example(ex, g()));
    CHECK(ex.meta.subject_modifier == Modifier::None);
    CHECK(ex.meta.main_aux_idx == nth_where(ex.source, 1, is_aux));
    CHECK(move_first_question(ex.source, g()) == ex.target);
    CHECK(ex.target.back() == "?");
  }
  for (const auto& ex : sp.gen) {
    CHECK_NOTHROW(validate_example(ex, g()));
    CHECK(ex.meta.subject_modifier == Modifier::RelativeClause);
    CHECK(ex.meta.main_aux_idx == nth_where(ex.source, 2, is_aux));
    CHECK(ex.target.front() == ex.gold_targeted_word());
    const Tokens linear = move_first_question(ex.source, g());
    CHECK(linear != ex.target);
    CHECK(linear.front() != ex.target.front());
  }
}

TEST_CASE("passive splits: train is ambiguous, gen separates the hypotheses") {
  const auto sp = build_transform_splits(Task::Passive, g(), small_sizes(), 4);
  auto is_noun = [](const std::string& w) { return g().is_noun(w); };
  for (const auto& ex : sp.train) {
    CHECK_NOTHROW(validate_example(ex, g()));
    CHECK(count_auxiliaries(ex.source, g()) == 0);
    CHECK(ex.meta.object_idx == nth_where(ex.source, 2, is_noun));
    CHECK(passivize_second(ex.source, g()) == ex.target);
  }
  for (const auto& ex : sp.gen) {
    CHECK_NOTHROW(validate_example(ex, g()));
    CHECK(ex.meta.subject_modifier == Modifier::PrepPhrase);
    CHECK(ex.meta.object_idx == nth_where(ex.source, 3, is_noun));
    const Tokens linear = passivize_second(ex.source, g());
    CHECK(linear != ex.target);
    // Object head is the first noun of both passives; the linear one fronts the wrong noun.
    CHECK(linear[nth_where(linear, 1, is_noun)] != ex.gold_targeted_word());
    CHECK(ex.target[nth_where(ex.target, 1, is_noun)] == ex.gold_targeted_word());
  }
}

TEST_CASE("target is a multiset permutation of the source for questions") {
  const auto sp = build_transform_splits(Task::Question, g(), small_sizes(), 9);
  for (const auto& ex : sp.gen) {
    std::map<std::string, int> a, b;
    for (const auto& w : ex.source) a[w]++;
    for (const auto& w : ex.target) b[w]++;
    a["."]--;
    a["?"]++;
    std::erase_if(a, [](const auto& kv) { return kv.second == 0; });
    CHECK(a == b);
  }
}

TEST_CASE("validate_example rejects corrupted examples") {
  const auto sp = build_transform_splits(Task::Question, g(), {20, 5, 5}, 1);
  auto ex = sp.gen[0];
  ex.target = move_first_question(ex.source, g());
  CHECK_THROWS_AS(validate_example(ex, g()), DataError);
  ex = sp.gen[0];
  ex.meta.main_aux_idx = ex.meta.first_aux_idx;
  CHECK_THROWS_AS(validate_example(ex, g()), DataError);
}

TEST_CASE("split files round-trip") {
  const auto dir = scratch("splits");
  const auto sp = build_transform_splits(Task::Passive, g(), {50, 10, 10}, 2);
  write_splits(sp, dir);
  CHECK(std::filesystem::exists(dir / "passiv_train.tsv"));
  CHECK(std::filesystem::exists(dir / "passiv_gen.meta.jsonl"));
  for (Split s : {Split::Train, Split::Test, Split::Gen}) {
    const auto back = read_split(dir, Task::Passive, s);
    REQUIRE(back.size() == sp.get(s).size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].source == sp.get(s)[i].source);
      CHECK(back[i].target == sp.get(s)[i].target);
      CHECK(back[i].meta.object_idx == sp.get(s)[i].meta.object_idx);
      CHECK(back[i].meta.subject_modifier == sp.get(s)[i].meta.subject_modifier);
    }
  }
  write_file(meta_path(dir, Task::Passive, Split::Test), "{not json\n");
  CHECK_THROWS_AS(read_split(dir, Task::Passive, Split::Test), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tiny grammar cannot supply a large split") {
  const Grammar tiny = Grammar::from_table(R"(
the determiner n/a
dog noun sg
dogs noun pl
see verb-trans n/a seen past=saw gerund=seeing
does auxiliary sg takes=base
do auxiliary pl takes=base
that relativizer n/a
near preposition n/a
)");
  CHECK_THROWS_AS(build_transform_splits(Task::Question, tiny, {5000, 10, 10}, 1), GenerationError);
  CHECK_THROWS_AS(build_transform_splits(Task::Question, g(), {0, 10, 10}, 1), UsageError);
}

TEST_CASE("synthetic corpora reach the word budget deterministically") {
  for (Register r : {Register::Simple, Register::Complex}) {
    CorpusSpec spec{r, 3000, 17, std::nullopt};
    const auto a = synth_corpus(spec, g());
    const auto b = synth_corpus(spec, g());
    CHECK(a == b);
    const std::size_t w = count_words(a);
    CHECK(w >= 3000);
    CHECK(w - count_words(a.back()) < 3000);
    for (const auto& line : a) CHECK(line.find('\n') == std::string::npos);
  }
}

TEST_CASE("simple register stays flat, complex register is richer") {
  const auto simple = synth_corpus({Register::Simple, 20000, 1, std::nullopt}, g());
  const auto complex = synth_corpus({Register::Complex, 20000, 1, std::nullopt}, g());
  bool has_question = false;
  for (const auto& line : simple) {
    const Tokens t = split_words(line);
    CHECK(std::none_of(t.begin(), t.end(), [](const auto& w) { return g().is_relativizer(w); }));
    has_question |= t.back() == "?";
  }
  CHECK(has_question);
  int nested = 0;
  for (const auto& line : complex) {
    const Tokens t = split_words(line);
    CHECK(t.back() == ".");
    nested += std::count_if(t.begin(), t.end(), [](const auto& w) { return g().is_relativizer(w); }) >= 2;
  }
  CHECK(nested > 0);
  const auto s = corpus_stats(simple);
  const auto c = corpus_stats(complex);
  CHECK(c.vocab_size > 3 * s.vocab_size);
  CHECK(c.mean_length > s.mean_length);

  const Grammar cg = complex_register_grammar(g());
  const auto vocab = cg.vocabulary();
  CHECK(vocab.size() >= 10 * s.vocab_size);
  CHECK(std::set<std::string>(vocab.begin(), vocab.end()).size() == vocab.size());
}

TEST_CASE("external register copies normalized lines") {
  const auto dir = scratch("external");
  write_file(dir / "ext.txt", "  The  Dog Ran .\n\nA  cat slept .\nmore words here .\n");
  CorpusSpec spec{Register::External, 6, 0, dir / "ext.txt"};
  const auto lines = synth_corpus(spec, g());
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "the dog ran .");
  spec.size_words = 1000;
  CHECK_THROWS_AS(synth_corpus(spec, g()), DataError);
  spec.source_path.reset();
  CHECK_THROWS_AS(synth_corpus(spec, g()), UsageError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("nested subsamples are subsets in corpus order") {
  const auto corpus = synth_corpus({Register::Simple, 5000, 2, std::nullopt}, g());
  const std::vector<std::size_t> sizes{500, 1500, 4000};
  const auto subs = subsample_nested(corpus, sizes, 8);
  REQUIRE(subs.size() == 3);
  std::map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < corpus.size(); ++i) positions[corpus[i]].push_back(i);
  for (std::size_t k = 0; k < subs.size(); ++k) {
    CHECK(count_words(subs[k]) >= sizes[k]);
    if (k) {
      std::multiset<std::string> big(subs[k].begin(), subs[k].end());
      for (const auto& line : subs[k - 1]) {
        auto it = big.find(line);
        REQUIRE(it != big.end());
        big.erase(it);
      }
    }
  }
  CHECK(subsample_nested(corpus, sizes, 8) == subs);
  CHECK_THROWS_AS(subsample_nested(corpus, {100, 50}, 1), UsageError);
  CHECK_THROWS_AS(subsample_nested(corpus, {count_words(corpus) + 1}, 1), DataError);
}

TEST_CASE("concat preserves the multiset of lines") {
  const std::vector<std::string> a{"a b .", "c d .", "e ."}, b{"f g .", "h ."};
  const auto out = concat_corpora(a, b, 4);
  std::multiset<std::string> want(a.begin(), a.end());
  want.insert(b.begin(), b.end());
  CHECK(std::multiset<std::string>(out.begin(), out.end()) == want);
  CHECK(concat_corpora(a, b, 4) == out);
}

TEST_CASE("corpus stats match hand counts") {
  const auto s = corpus_stats({"the dog ran .", "", "the cats slept well ."});
  CHECK(s.words == 9);
  CHECK(s.sentences == 2);
  CHECK(s.mean_length == doctest::Approx(4.5));
  CHECK(s.median_length == doctest::Approx(4.5));
  CHECK(s.vocab_size == 7);
  CHECK(s.type_token_ratio == doctest::Approx(7.0 / 9.0));
}
