#include "hierbias/tokenizer.hpp"

#include <map>
#include <set>
#include <sstream>

#include "hierbias/errors.hpp"

namespace hierbias {

std::string_view to_string(TokenizerMode m) { return m == TokenizerMode::Word ? "word" : "subword"; }

TokenizerMode parse_tokenizer_mode(std::string_view s) {
  if (s == "word") return TokenizerMode::Word;
  if (s == "subword") return TokenizerMode::Subword;
  throw UsageError("unknown tokenizer mode '" + std::string(s) + "'");
}

namespace {

constexpr std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

void merge_in_place(std::vector<TokenId>& syms, TokenId a, TokenId b, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
      syms[out++] = merged;
      ++i;
    } else {
      syms[out++] = syms[i];
    }
  }
  syms.resize(out);
}

constexpr std::string_view kMagic = "hierbias-tokenizer 1";

}  // namespace

void Tokenizer::init_specials(int num_sentinels) {
  if (num_sentinels < 0) throw UsageError("sentinel count must be non-negative");
  num_sentinels_ = num_sentinels;
  pieces_ = {"<pad>", "<eos>", "<unk>"};
  for (int i = 0; i < num_sentinels; ++i) pieces_.push_back("<extra_id_" + std::to_string(i) + ">");
}

void Tokenizer::rebuild_lookup() {
  word_ids_.clear();
  merge_rank_.clear();
  if (mode_ == TokenizerMode::Word) {
    for (TokenId id = content_begin(); id < size(); ++id) word_ids_.emplace(pieces_[id], id);
  } else {
    const TokenId first_merge = content_begin() + 256;
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      merge_rank_.emplace(pair_key(merges_[i].first, merges_[i].second),
                          first_merge + static_cast<TokenId>(i));
    }
  }
}

TokenId Tokenizer::sentinel(int i) const {
  if (i < 0 || i >= num_sentinels_) {
    throw UsageError("sentinel " + std::to_string(i) + " out of range (have " + std::to_string(num_sentinels_) + ")");
  }
  return kFirstSentinel + i;
}

Tokenizer Tokenizer::word(const std::vector<std::string>& vocabulary, int num_sentinels) {
  Tokenizer t;
  t.mode_ = TokenizerMode::Word;
  t.init_specials(num_sentinels);
  std::set<std::string> seen;
  for (const auto& w : vocabulary) {
    if (w.empty() || w.find_first_of(" \t\n\r") != std::string::npos) {
      throw DataError("word vocabulary entry '" + w + "' is empty or contains whitespace");
    }
    if (seen.insert(w).second) t.pieces_.push_back(w);
  }
  t.vocab_cap_ = t.size();
  t.rebuild_lookup();
  return t;
}

Tokenizer Tokenizer::word_from_corpus(const std::vector<std::string>& lines, int num_sentinels) {
  std::set<std::string> types;
  for (const auto& line : lines) {
    for (auto& w : split_words(normalize_text(line))) types.insert(std::move(w));
  }
  if (types.empty()) throw DataError("corpus is empty");
  return word(std::vector<std::string>(types.begin(), types.end()), num_sentinels);
}

Tokenizer Tokenizer::train_subword(const std::vector<std::string>& lines, const TokenizerConfig& config) {
  Tokenizer t;
  t.mode_ = TokenizerMode::Subword;
  t.init_specials(config.num_sentinels);
  const TokenId byte_base = t.content_begin();
  if (config.vocab_size < byte_base + 256) {
    throw UsageError("vocab_size " + std::to_string(config.vocab_size) + " is below the " +
                     std::to_string(byte_base + 256) + " base symbols (specials + bytes)");
  }
  t.vocab_cap_ = config.vocab_size;
  for (int b = 0; b < 256; ++b) t.pieces_.push_back(std::string(1, static_cast<char>(b)));

  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : lines) {
    for (const auto& w : split_words(normalize_text(line))) ++word_freq[w];
  }
  if (word_freq.empty()) throw DataError("cannot train a tokenizer on an empty corpus");

  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> freq;
  for (const auto& [w, f] : word_freq) {
    std::vector<TokenId> syms{byte_base + ' '};
    for (unsigned char c : w) syms.push_back(byte_base + c);
    words.push_back(std::move(syms));
    freq.push_back(f);
  }

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::set<std::pair<std::int64_t, std::uint64_t>> ranked;  // (-count, key): begin() is the best pair
  std::unordered_map<std::uint64_t, std::vector<int>> where;
  auto adjust = [&](std::uint64_t key, std::int64_t delta) {
    auto& c = counts[key];
    if (c > 0) ranked.erase({-c, key});
    c += delta;
    if (c > 0) ranked.insert({-c, key});
  };
  for (int wi = 0; wi < static_cast<int>(words.size()); ++wi) {
    const auto& s = words[wi];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      adjust(pair_key(s[i], s[i + 1]), freq[wi]);
      where[pair_key(s[i], s[i + 1])].push_back(wi);
    }
  }

  std::vector<int> stamp(words.size(), -1);
  while (t.size() < config.vocab_size && !ranked.empty() && -ranked.begin()->first >= 2) {
    const std::uint64_t key = ranked.begin()->second;
    const TokenId a = static_cast<TokenId>(key >> 32), b = static_cast<TokenId>(key & 0xffffffffu);
    const TokenId merged = t.size();
    t.merges_.emplace_back(a, b);
    t.pieces_.push_back(t.pieces_[a] + t.pieces_[b]);
    const std::vector<int> affected = std::move(where[key]);
    where.erase(key);
    for (int wi : affected) {
      if (stamp[wi] == merged) continue;
      stamp[wi] = merged;
      auto& s = words[wi];
      for (std::size_t i = 0; i + 1 < s.size(); ++i) adjust(pair_key(s[i], s[i + 1]), -freq[wi]);
      merge_in_place(s, a, b, merged);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto k = pair_key(s[i], s[i + 1]);
        adjust(k, freq[wi]);
        if (s[i] == merged || s[i + 1] == merged) where[k].push_back(wi);
      }
    }
  }
  t.rebuild_lookup();
  return t;
}

void Tokenizer::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  if (mode_ == TokenizerMode::Word) {
    const auto it = word_ids_.find(std::string(word));
    out.push_back(it == word_ids_.end() ? kUnk : it->second);
    return;
  }
  const TokenId byte_base = content_begin();
  std::vector<TokenId> syms{byte_base + ' '};
  for (unsigned char c : word) syms.push_back(byte_base + c);
  for (;;) {
    TokenId best = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      const auto it = merge_rank_.find(pair_key(syms[i], syms[i + 1]));
      if (it != merge_rank_.end() && (best < 0 || it->second < best)) {
        best = it->second;
        best_pos = i;
      }
    }
    if (best < 0) break;
    merge_in_place(syms, syms[best_pos], syms[best_pos + 1], best);
  }
  out.insert(out.end(), syms.begin(), syms.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  return encode_words(split_words(normalize_text(text)));
}

std::vector<TokenId> Tokenizer::encode_words(const Tokens& words) const {
  std::vector<TokenId> out;
  out.reserve(words.size() * 2);
  for (const auto& w : words) encode_word(w, out);
  return out;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || id >= size()) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
    }
    if (mode_ == TokenizerMode::Word || is_special(id)) {
      out += ' ';
      out += pieces_[id];
    } else {
      out += pieces_[id];
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

std::string Tokenizer::decode_until_eos(const std::vector<TokenId>& ids) const {
  std::vector<TokenId> kept;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id != kPad) kept.push_back(id);
  }
  return decode(kept);
}

bool Tokenizer::covers(const Tokens& words) const {
  const auto ids = encode_words(words);
  return std::find(ids.begin(), ids.end(), kUnk) == ids.end();
}

std::string Tokenizer::serialize() const {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "mode " << to_string(mode_) << '\n';
  out << "vocab_size " << vocab_cap_ << '\n';
  out << "specials pad=0 eos=1 unk=2 sentinels=" << num_sentinels_ << '\n';
  if (mode_ == TokenizerMode::Word) {
    out << "words " << size() - content_begin() << '\n';
    for (TokenId id = content_begin(); id < size(); ++id) out << pieces_[id] << '\n';
  } else {
    out << "merges " << merges_.size() << '\n';
    for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
  }
  return out.str();
}

Tokenizer Tokenizer::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto expect = [&](std::string_view key) {
    std::string k;
    if (!(in >> k) || k != key) throw DataError("tokenizer file: expected '" + std::string(key) + "'");
  };
  if (!std::getline(in, line) || line != kMagic) throw DataError("not a tokenizer file (bad header)");
  Tokenizer t;
  std::string mode;
  expect("mode");
  in >> mode;
  try {
    t.mode_ = parse_tokenizer_mode(mode);
  } catch (const UsageError& e) {
    throw DataError(std::string("tokenizer file: ") + e.what());
  }
  expect("vocab_size");
  in >> t.vocab_cap_;
  expect("specials");
  std::string pad, eos, unk, sentinels;
  in >> pad >> eos >> unk >> sentinels;
  if (pad != "pad=0" || eos != "eos=1" || unk != "unk=2" || sentinels.rfind("sentinels=", 0) != 0) {
    throw DataError("tokenizer file: unsupported special layout");
  }
  t.init_specials(std::stoi(sentinels.substr(10)));
  std::size_t n = 0;
  if (t.mode_ == TokenizerMode::Word) {
    expect("words");
    if (!(in >> n)) throw DataError("tokenizer file: missing word count");
    for (std::size_t i = 0; i < n; ++i) {
      std::string w;
      if (!(in >> w)) throw DataError("tokenizer file: truncated word list");
      t.pieces_.push_back(w);
    }
  } else {
    for (int b = 0; b < 256; ++b) t.pieces_.push_back(std::string(1, static_cast<char>(b)));
    expect("merges");
    if (!(in >> n)) throw DataError("tokenizer file: missing merge count");
    for (std::size_t i = 0; i < n; ++i) {
      TokenId a = 0, b = 0;
      if (!(in >> a >> b)) throw DataError("tokenizer file: truncated merge list");
      if (a < t.content_begin() || b < t.content_begin() || a >= t.size() || b >= t.size()) {
        throw DataError("tokenizer file: merge refers to an undefined id");
      }
      t.merges_.emplace_back(a, b);
      t.pieces_.push_back(t.pieces_[a] + t.pieces_[b]);
    }
  }
  t.rebuild_lookup();
  return t;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

void Tokenizer::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

std::uint64_t Tokenizer::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace hierbias
