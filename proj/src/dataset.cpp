#include "hierbias/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "hierbias/errors.hpp"
#include "hierbias/rng.hpp"

namespace hierbias {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Gen: return "gen";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "gen") return Split::Gen;
  throw UsageError("unknown split '" + std::string(s) + "'");
}

const std::string& TransformExample::gold_targeted_word() const {
  const int idx = task == Task::Question ? meta.main_aux_idx : meta.object_idx;
  if (idx < 0 || idx >= static_cast<int>(source.size())) {
    throw DataError("example has no gold " + std::string(task == Task::Question ? "main auxiliary" : "object"));
  }
  return source[idx];
}

const std::vector<TransformExample>& TransformSplits::get(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Test: return test;
    case Split::Gen: return gen;
  }
  return train;
}

namespace {

int safe_nth_aux(const Tokens& t, const Grammar& g, int n) {
  return count_auxiliaries(t, g) >= n ? nth_aux_index(t, g, n) : -1;
}

int safe_nth_noun(const Tokens& t, const Grammar& g, int n) {
  return count_nouns(t, g) >= n ? nth_noun_index(t, g, n) : -1;
}

TransformExample make_example(const ParseTree& tree, Task task, Split split, Modifier subj,
                              const Grammar& g) {
  TransformExample ex;
  ex.source = tree.leaves();
  ex.task = task;
  ex.split = split;
  ex.target = task == Task::Question ? move_main_question(tree) : passivize_main(tree, g);
  ExampleMeta& m = ex.meta;
  m.subject_modifier = subj;
  if (main_vp(tree).child("Aux")) m.main_aux_idx = main_aux_index(tree);
  m.first_aux_idx = safe_nth_aux(ex.source, g, 1);
  m.second_aux_idx = safe_nth_aux(ex.source, g, 2);
  if (main_vp(tree).child("NP")) m.object_idx = object_index(tree);
  m.nth_noun_idx = safe_nth_noun(ex.source, g, 2);
  m.third_noun_idx = safe_nth_noun(ex.source, g, 3);
  return ex;
}

SampleOptions options_for(Task task, Split split, Rng& rng) {
  SampleOptions o;
  if (task == Task::Question) {
    o.verb_form = VerbForm::Auxiliary;
    o.object_modifier = static_cast<Modifier>(rng.below(3));
    o.subject_modifier = split == Split::Gen ? Modifier::RelativeClause : Modifier::None;
  } else {
    o.verb_form = VerbForm::Past;
    o.require_transitive = true;
    o.object_modifier = rng.chance(0.5) ? Modifier::PrepPhrase : Modifier::None;
    o.subject_modifier = split == Split::Gen ? Modifier::PrepPhrase : Modifier::None;
  }
  return o;
}

// Generalization sentences where the competing hypotheses pick out the same
// surface word cannot discriminate between them.
bool discriminates(const TransformExample& ex) {
  const auto& m = ex.meta;
  if (ex.task == Task::Question) return ex.source[m.first_aux_idx] != ex.source[m.main_aux_idx];
  return ex.source[m.nth_noun_idx] != ex.source[m.object_idx];
}

}  // namespace

TransformSplits build_transform_splits(Task task, const Grammar& grammar,
                                       const SplitSizes& sizes, std::uint64_t seed) {
  if (sizes.n_train < 1 || sizes.n_test < 1 || sizes.n_gen < 1) {
    throw UsageError("split sizes must be at least 1");
  }
  TransformSplits out;
  out.task = task;
  std::unordered_set<std::string> seen;
  const std::pair<Split, std::size_t> plan[] = {
      {Split::Train, sizes.n_train}, {Split::Test, sizes.n_test}, {Split::Gen, sizes.n_gen}};
  for (const auto& [split, n] : plan) {
    auto& bucket = split == Split::Train ? out.train : split == Split::Test ? out.test : out.gen;
    bucket.reserve(n);
    const std::size_t max_attempts = 50 * n + 1000;
    std::size_t attempt = 0;
    while (bucket.size() < n) {
      if (attempt >= max_attempts) {
        throw GenerationError("grammar produced only " + std::to_string(bucket.size()) + " distinct " +
                              std::string(to_string(split)) + " examples out of " + std::to_string(n) +
                              " requested");
      }
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(split) + 1, attempt++);
      Rng rng(s);
      const SampleOptions o = options_for(task, split, rng);
      const ParseTree tree = sample_declarative(grammar, rng.next_u64(), o);
      TransformExample ex = make_example(tree, task, split, o.subject_modifier, grammar);
      if (split == Split::Gen && !discriminates(ex)) continue;
      if (!seen.insert(join_words(ex.source)).second) continue;
      bucket.push_back(std::move(ex));
    }
  }
  return out;
}

void validate_example(const TransformExample& ex, const Grammar& g) {
  auto fail = [&](const std::string& what) {
    throw DataError("invariant violated (" + what + ") for: " + join_words(ex.source));
  };
  const ParseTree tree = parse_declarative(ex.source, g);
  const Tokens expected = ex.task == Task::Question ? move_main_question(tree) : passivize_main(tree, g);
  if (expected != ex.target) fail("target is not the hierarchical transformation");
  const auto& m = ex.meta;
  if (ex.task == Task::Question) {
    if (m.main_aux_idx != main_aux_index(tree)) fail("main_aux_idx");
    if (ex.split == Split::Gen) {
      if (m.main_aux_idx != nth_aux_index(ex.source, g, 2)) fail("main aux is not the second auxiliary");
      if (ex.source[m.first_aux_idx] == ex.source[m.main_aux_idx]) fail("non-discriminating auxiliaries");
    } else if (m.main_aux_idx != first_aux_index(ex.source, g)) {
      fail("main aux is not the first auxiliary");
    }
  } else {
    if (m.object_idx != object_index(tree)) fail("object_idx");
    if (ex.split == Split::Gen) {
      if (m.object_idx != nth_noun_index(ex.source, g, 3)) fail("object is not the third noun");
      if (ex.source[m.nth_noun_idx] == ex.source[m.object_idx]) fail("non-discriminating nouns");
    } else if (m.object_idx != nth_noun_index(ex.source, g, 2)) {
      fail("object is not the second noun");
    }
  }
}

std::filesystem::path split_path(const std::filesystem::path& dir, Task task, Split split) {
  return dir / (std::string(to_string(task)) + "_" + std::string(to_string(split)) + ".tsv");
}

std::filesystem::path meta_path(const std::filesystem::path& dir, Task task, Split split) {
  return dir / (std::string(to_string(task)) + "_" + std::string(to_string(split)) + ".meta.jsonl");
}

void write_splits(const TransformSplits& splits, const std::filesystem::path& dir) {
  for (Split s : {Split::Train, Split::Test, Split::Gen}) {
    std::string tsv, jsonl;
    for (const auto& ex : splits.get(s)) {
      tsv += join_words(ex.source) + '\t' + join_words(ex.target) + '\n';
      nlohmann::ordered_json j;
      j["task"] = to_string(ex.task);
      j["split"] = to_string(ex.split);
      j["main_aux_idx"] = ex.meta.main_aux_idx;
      j["first_aux_idx"] = ex.meta.first_aux_idx;
      j["second_aux_idx"] = ex.meta.second_aux_idx;
      j["object_idx"] = ex.meta.object_idx;
      j["nth_noun_idx"] = ex.meta.nth_noun_idx;
      j["third_noun_idx"] = ex.meta.third_noun_idx;
      j["subject_modifier"] = to_string(ex.meta.subject_modifier);
      jsonl += j.dump() + '\n';
    }
    write_file(split_path(dir, splits.task, s), tsv);
    write_file(meta_path(dir, splits.task, s), jsonl);
  }
}

std::vector<TransformExample> read_split(const std::filesystem::path& dir, Task task, Split split) {
  const auto rows = read_lines(split_path(dir, task, split));
  const auto metas = read_lines(meta_path(dir, task, split));
  std::vector<TransformExample> out;
  std::size_t mi = 0;
  for (const auto& row : rows) {
    if (row.empty()) continue;
    const auto tab = row.find('\t');
    if (tab == std::string::npos) throw DataError("TSV row without a tab: " + row);
    TransformExample ex;
    ex.source = split_words(row.substr(0, tab));
    ex.target = split_words(row.substr(tab + 1));
    ex.task = task;
    ex.split = split;
    while (mi < metas.size() && metas[mi].empty()) ++mi;
    if (mi >= metas.size()) throw DataError("metadata file has fewer rows than the TSV");
    try {
      const auto j = nlohmann::json::parse(metas[mi++]);
      ex.meta.main_aux_idx = j.at("main_aux_idx").get<int>();
      ex.meta.first_aux_idx = j.at("first_aux_idx").get<int>();
      ex.meta.second_aux_idx = j.value("second_aux_idx", -1);
      ex.meta.object_idx = j.at("object_idx").get<int>();
      ex.meta.nth_noun_idx = j.at("nth_noun_idx").get<int>();
      ex.meta.third_noun_idx = j.value("third_noun_idx", -1);
      ex.meta.subject_modifier = parse_modifier(j.at("subject_modifier").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad metadata row: " + std::string(e.what()));
    } catch (const UsageError& e) {
      throw DataError(e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpora

std::string_view to_string(Register r) {
  switch (r) {
    case Register::Simple: return "simple";
    case Register::Complex: return "complex";
    case Register::External: return "external";
  }
  return "?";
}

Register parse_register(std::string_view s) {
  if (s == "simple") return Register::Simple;
  if (s == "complex") return Register::Complex;
  if (s == "external") return Register::External;
  throw UsageError("unknown register '" + std::string(s) + "'");
}

std::size_t count_words(const std::string& line) { return split_words(line).size(); }

std::size_t count_words(const std::vector<std::string>& lines) {
  std::size_t n = 0;
  for (const auto& l : lines) n += count_words(l);
  return n;
}

namespace {

constexpr std::size_t kComplexNounLemmas = 240;
constexpr std::size_t kComplexTransVerbs = 40;
constexpr std::size_t kComplexIntransVerbs = 10;

// Deterministic pseudo-words ("blomi", "trasek", ...) that avoid every form
// already present in the lexicon.
class NonceWords {
 public:
  explicit NonceWords(const Grammar& g) {
    for (const auto& w : g.vocabulary()) used_.insert(w);
  }

  std::string next(bool verb) {
    static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                               "s", "t", "v", "z", "bl", "dr", "gr", "pl", "st", "tr"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};
    static constexpr const char* kCodas[] = {"", "n", "k", "l", "m", "p"};
    for (;;) {
      const std::uint64_t h = mix64(counter_++);
      std::string w = kOnsets[h % 20];
      w += kVowels[(h >> 8) % 5];
      w += kOnsets[(h >> 16) % 14];
      w += kVowels[(h >> 24) % 5];
      w += kCodas[verb ? 1 + (h >> 32) % 5 : (h >> 32) % 6];
      const bool ok = !used_.contains(w) && !used_.contains(w + "s") && !used_.contains(w + "ed") &&
                      !used_.contains(w + "ing");
      if (!ok) continue;
      for (const auto* suffix : {"", "s", "ed", "ing"}) used_.insert(w + suffix);
      return w;
    }
  }

 private:
  std::unordered_set<std::string> used_;
  std::uint64_t counter_ = 1;
};

std::vector<double> zipf_weights(const Grammar& g) {
  // Rank lemmas within each open class in lexicon order; sg/pl noun pairs
  // share a rank. Closed classes stay uniform.
  std::vector<double> w(g.lexicon().size(), 1.0);
  std::unordered_map<int, int> rank;
  int noun_rank = 0;
  for (int id : g.entries(PartOfSpeech::Noun)) {
    w[id] = 1.0 / (1.0 + noun_rank / 2);
    ++noun_rank;
  }
  int verb_rank = 0;
  for (int id : g.entries(PartOfSpeech::VerbTrans)) w[id] = 1.0 / (1.0 + verb_rank++);
  verb_rank = 0;
  for (int id : g.entries(PartOfSpeech::VerbIntrans)) w[id] = 1.0 / (1.0 + verb_rank++);
  return w;
}

std::vector<double> simple_weights(const Grammar& g) {
  std::vector<double> w(g.lexicon().size(), 0.0);
  auto keep_first = [&](PartOfSpeech pos, std::size_t n) {
    const auto& ids = g.entries(pos);
    for (std::size_t i = 0; i < ids.size() && i < n; ++i) w[ids[i]] = 1.0;
  };
  keep_first(PartOfSpeech::Noun, 24);
  keep_first(PartOfSpeech::VerbTrans, 5);
  keep_first(PartOfSpeech::VerbIntrans, 5);
  keep_first(PartOfSpeech::Determiner, 3);
  keep_first(PartOfSpeech::Preposition, 2);
  keep_first(PartOfSpeech::Auxiliary, g.entries(PartOfSpeech::Auxiliary).size());
  return w;
}

std::string simple_sentence(const Grammar& g, const std::vector<double>& weights, Rng& rng) {
  SampleOptions o;
  o.entry_weights = weights;
  const double kind = rng.uniform();
  if (kind < 0.45) {
    o.object_modifier = rng.chance(0.1) ? Modifier::PrepPhrase : Modifier::None;
    return join_words(sample_declarative(g, rng.next_u64(), o).leaves());
  }
  if (kind < 0.80) return join_words(move_main_question(sample_declarative(g, rng.next_u64(), o)));
  o.verb_form = VerbForm::Past;
  return join_words(sample_declarative(g, rng.next_u64(), o).leaves());
}

Modifier complex_modifier(Rng& rng) {
  const double r = rng.uniform();
  return r < 0.3 ? Modifier::RelativeClause : r < 0.6 ? Modifier::PrepPhrase : Modifier::None;
}

std::string complex_sentence(const Grammar& g, const std::vector<double>& weights, Rng& rng) {
  SampleOptions o;
  o.entry_weights = weights;
  o.max_depth = 2;
  o.nested_modifier_prob = 0.5;
  o.subject_modifier = complex_modifier(rng);
  o.object_modifier = complex_modifier(rng);
  o.verb_form = rng.chance(0.6) ? VerbForm::Auxiliary : VerbForm::Past;
  return join_words(sample_declarative(g, rng.next_u64(), o).leaves());
}

}  // namespace

Grammar complex_register_grammar(const Grammar& base) {
  NonceWords nonce(base);
  std::vector<LexiconEntry> extra;
  for (std::size_t i = 0; i < kComplexNounLemmas; ++i) {
    const std::string w = nonce.next(false);
    extra.push_back({w, PartOfSpeech::Noun, Number::Singular, "", "", "", AuxComplement::Base});
    extra.push_back({w + "s", PartOfSpeech::Noun, Number::Plural, "", "", "", AuxComplement::Base});
  }
  for (std::size_t i = 0; i < kComplexTransVerbs + kComplexIntransVerbs; ++i) {
    const std::string w = nonce.next(true);
    const bool trans = i < kComplexTransVerbs;
    extra.push_back({w, trans ? PartOfSpeech::VerbTrans : PartOfSpeech::VerbIntrans, Number::None,
                     trans ? w + "ed" : "", w + "ed", w + "ing", AuxComplement::Base});
  }
  return base.extended(extra);
}

std::vector<std::string> synth_corpus(const CorpusSpec& spec, const Grammar& grammar) {
  if (spec.size_words == 0) throw UsageError("corpus size must be positive");
  std::vector<std::string> lines;
  std::size_t words = 0;
  if (spec.reg == Register::External) {
    if (!spec.source_path) throw UsageError("external register needs a source path");
    for (const auto& raw : read_lines(*spec.source_path)) {
      std::string line = normalize_text(raw);
      if (line.empty()) continue;
      words += count_words(line);
      lines.push_back(std::move(line));
      if (words >= spec.size_words) return lines;
    }
    throw DataError("external corpus has only " + std::to_string(words) + " words, " +
                    std::to_string(spec.size_words) + " requested");
  }

  const Grammar complex_grammar = spec.reg == Register::Complex ? complex_register_grammar(grammar) : grammar;
  const Grammar& g = spec.reg == Register::Complex ? complex_grammar : grammar;
  const std::vector<double> weights = spec.reg == Register::Complex ? zipf_weights(g) : simple_weights(g);
  for (std::uint64_t i = 0; words < spec.size_words; ++i) {
    Rng rng(derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(spec.reg), i));
    std::string line = spec.reg == Register::Complex ? complex_sentence(g, weights, rng)
                                                     : simple_sentence(g, weights, rng);
    words += count_words(line);
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::vector<std::string>> subsample_nested(const std::vector<std::string>& corpus,
                                                       const std::vector<std::size_t>& sizes,
                                                       std::uint64_t seed) {
  if (sizes.empty()) throw UsageError("no subsample sizes given");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) throw UsageError("subsample sizes must be positive");
    if (i && sizes[i] <= sizes[i - 1]) throw UsageError("subsample sizes must be strictly increasing");
  }
  const std::size_t total = count_words(corpus);
  if (sizes.back() > total) {
    throw DataError("requested " + std::to_string(sizes.back()) + " words from a corpus of " +
                    std::to_string(total));
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 200));
  rng.shuffle(std::span(order));

  std::vector<std::vector<std::string>> out;
  std::size_t taken = 0, words = 0;
  for (std::size_t target : sizes) {
    while (words < target) words += count_words(corpus[order[taken++]]);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(taken));
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::string> lines;
    lines.reserve(chosen.size());
    for (std::size_t idx : chosen) lines.push_back(corpus[idx]);
    out.push_back(std::move(lines));
  }
  return out;
}

std::vector<std::string> concat_corpora(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b, std::uint64_t seed) {
  std::vector<std::string> out = a;
  out.insert(out.end(), b.begin(), b.end());
  Rng rng(derive_seed(seed, 300));
  rng.shuffle(std::span(out));
  return out;
}

CorpusStats corpus_stats(const std::vector<std::string>& lines) {
  CorpusStats s;
  std::unordered_set<std::string> types;
  std::vector<std::size_t> lengths;
  for (const auto& line : lines) {
    const Tokens w = split_words(line);
    if (w.empty()) continue;
    lengths.push_back(w.size());
    s.words += w.size();
    for (const auto& t : w) types.insert(t);
  }
  s.sentences = lengths.size();
  if (s.sentences == 0) return s;
  s.mean_length = static_cast<double>(s.words) / static_cast<double>(s.sentences);
  std::sort(lengths.begin(), lengths.end());
  const std::size_t mid = lengths.size() / 2;
  s.median_length = lengths.size() % 2 ? static_cast<double>(lengths[mid])
                                       : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
  s.vocab_size = types.size();
  s.type_token_ratio = static_cast<double>(s.vocab_size) / static_cast<double>(s.words);
  return s;
}

}  // namespace hierbias
