#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <map>

#include "hierbias/dataset.hpp"
#include "hierbias/errors.hpp"
#include "hierbias/rng.hpp"
#include "hierbias/tokenizer.hpp"

using namespace hierbias;

namespace {

// Naive BPE: recount every pair from scratch each step.
std::vector<std::pair<TokenId, TokenId>> naive_bpe(const std::vector<std::string>& lines, int base,
                                                   int max_merges) {
  std::map<std::string, long> freq;
  for (const auto& l : lines) {
    for (const auto& w : split_words(normalize_text(l))) ++freq[w];
  }
  std::vector<std::pair<std::vector<int>, long>> words;
  for (const auto& [w, f] : freq) {
    std::vector<int> s{base + ' '};
    for (unsigned char c : w) s.push_back(base + c);
    words.emplace_back(s, f);
  }
  std::vector<std::pair<TokenId, TokenId>> merges;
  int next = base + 256;
  while (static_cast<int>(merges.size()) < max_merges) {
    std::map<std::pair<int, int>, long> counts;
    for (const auto& [s, f] : words) {
      for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += f;
    }
    std::pair<int, int> best{-1, -1};
    long best_count = 1;
    for (const auto& [p, c] : counts) {
      if (c > best_count) {  // map order makes the first maximum the lowest ids
        best = p;
        best_count = c;
      }
    }
    if (best.first < 0) break;
    merges.push_back(best);
    for (auto& [s, f] : words) {
      std::vector<int> out;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          out.push_back(next);
          ++i;
        } else {
          out.push_back(s[i]);
        }
      }
      s = out;
    }
    ++next;
  }
  return merges;
}

std::vector<std::string> sample_corpus(std::size_t words, Register reg = Register::Complex) {
  return synth_corpus({reg, words, 3, std::nullopt}, Grammar::builtin());
}

}  // namespace

TEST_CASE("id layout puts specials first and sentinels contiguous") {
  const auto t = Tokenizer::word({"a", "b", "a"}, 4);
  CHECK(t.size() == 3 + 4 + 2);
  CHECK(t.content_begin() == 7);
  for (int i = 0; i < 4; ++i) CHECK(t.sentinel(i) == 3 + i);
  CHECK_THROWS_AS(t.sentinel(4), UsageError);
  CHECK(t.encode("a b c") == std::vector<TokenId>{7, 8, Tokenizer::kUnk});
  CHECK(t.decode({7, 1, 4}) == "a <eos> <extra_id_1>");
  CHECK(t.decode_until_eos({7, 0, 8, 1, 7}) == "a b");
  CHECK_THROWS_AS(t.decode({99}), DataError);
  CHECK_THROWS_AS(Tokenizer::word({"two words"}), DataError);
}

TEST_CASE("incremental BPE matches a naive recount oracle") {
  const auto corpus = sample_corpus(3000);
  TokenizerConfig cfg{TokenizerMode::Subword, 3 + 8 + 256 + 300, 8};
  const auto t = Tokenizer::train_subword(corpus, cfg);
  const auto oracle = naive_bpe(corpus, 3 + 8, 300);
  REQUIRE(t.merges().size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(t.merges()[i] == oracle[i]);
}

TEST_CASE("one repeated word becomes a single token") {
  const std::vector<std::string> corpus(50, "walrus walrus walrus");
  const auto t = Tokenizer::train_subword(corpus, {TokenizerMode::Subword, 8192, 32});
  CHECK(t.encode("walrus") == std::vector<TokenId>{t.size() - 1});
  CHECK(t.decode(t.encode("walrus walrus")) == "walrus walrus");
  CHECK(t.size() < 8192);
}

TEST_CASE("subword training is deterministic and round-trips") {
  const auto corpus = sample_corpus(20000);
  const TokenizerConfig cfg{TokenizerMode::Subword, 8192, 32};
  const auto a = Tokenizer::train_subword(corpus, cfg);
  const auto b = Tokenizer::train_subword(corpus, cfg);
  CHECK(a.merges() == b.merges());
  CHECK(a.fingerprint() == b.fingerprint());
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto& line = corpus[rng.below(corpus.size())];
    const auto ids = a.encode(line);
    CHECK(std::all_of(ids.begin(), ids.end(), [&](TokenId id) { return id >= a.content_begin() && id < a.size(); }));
    CHECK(a.decode(ids) == line);
  }
  CHECK(a.encode("").empty());
  CHECK(a.decode({}).empty());
  // Byte fallback: unseen words and characters never produce unk.
  const auto odd = a.encode("zqxj ünïcode 123 !");
  CHECK(std::find(odd.begin(), odd.end(), Tokenizer::kUnk) == odd.end());
  CHECK(a.decode(odd) == "zqxj ünïcode 123 !");
}

TEST_CASE("smaller vocabulary budget never segments more coarsely") {
  const auto corpus = sample_corpus(20000);
  const auto small = Tokenizer::train_subword(corpus, {TokenizerMode::Subword, 3 + 32 + 256 + 200, 32});
  const auto large = Tokenizer::train_subword(corpus, {TokenizerMode::Subword, 3 + 32 + 256 + 2000, 32});
  std::size_t n_small = 0, n_large = 0;
  for (const auto& l : corpus) {
    n_small += small.encode(l).size();
    n_large += large.encode(l).size();
  }
  CHECK(n_small >= n_large);
  CHECK(n_small > n_large);
}

TEST_CASE("vocab budget below the base symbols is rejected") {
  CHECK_THROWS_AS(Tokenizer::train_subword({"a b"}, {TokenizerMode::Subword, 200, 32}), UsageError);
  CHECK_THROWS_AS(Tokenizer::train_subword({"", "  "}, {TokenizerMode::Subword, 8192, 32}), DataError);
}

TEST_CASE("serialization round-trips both modes") {
  const auto dir = std::filesystem::temp_directory_path() / "hierbias_test_tok";
  std::filesystem::remove_all(dir);
  const auto corpus = sample_corpus(5000);
  const auto sub = Tokenizer::train_subword(corpus, {TokenizerMode::Subword, 8192, 16});
  const auto word = Tokenizer::word_from_corpus(corpus, 16);
  sub.save(dir / "sub.tok");
  word.save(dir / "word.tok");
  const auto sub2 = Tokenizer::load(dir / "sub.tok");
  const auto word2 = Tokenizer::load(dir / "word.tok");
  CHECK(sub2.serialize() == sub.serialize());
  CHECK(word2.serialize() == word.serialize());
  CHECK(sub2.mode() == TokenizerMode::Subword);
  CHECK(word2.size() == word.size());
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(sub2.encode(corpus[i]) == sub.encode(corpus[i]));
    CHECK(word2.encode(corpus[i]) == word.encode(corpus[i]));
    CHECK(word2.decode(word2.encode(corpus[i])) == corpus[i]);
  }
  CHECK_THROWS_AS(Tokenizer::deserialize("garbage\n"), DataError);
  CHECK_THROWS_AS(Tokenizer::deserialize("hierbias-tokenizer 1\nmode subword\nvocab_size 9000\n"
                                         "specials pad=0 eos=1 unk=2 sentinels=0\nmerges 1\n5 900\n"),
                  DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("grammar word tokenizer covers every transform example") {
  const auto t = Tokenizer::word(Grammar::builtin().vocabulary());
  for (Task task : {Task::Question, Task::Passive}) {
    const auto sp = build_transform_splits(task, Grammar::builtin(), {200, 20, 50}, 1);
    for (Split s : {Split::Train, Split::Gen}) {
      for (const auto& ex : sp.get(s)) {
        CHECK(t.covers(ex.source));
        CHECK(t.covers(ex.target));
        CHECK(t.decode(t.encode_words(ex.target)) == join_words(ex.target));
      }
    }
  }
  CHECK_FALSE(t.covers({"blorpt"}));
}
