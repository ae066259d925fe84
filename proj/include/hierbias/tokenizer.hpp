#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hierbias/text.hpp"

namespace hierbias {

using TokenId = std::int32_t;

enum class TokenizerMode { Word, Subword };

std::string_view to_string(TokenizerMode m);
TokenizerMode parse_tokenizer_mode(std::string_view s);

struct TokenizerConfig {
  TokenizerMode mode = TokenizerMode::Subword;
  /// Upper bound on the id space, specials included. Subword training stops
  /// early when no pair occurs twice.
  int vocab_size = 8192;
  int num_sentinels = 32;
};

/// Id layout: pad=0, eos=1, unk=2, sentinels 3..3+k-1, then content ids.
/// Subword content starts with the 256 byte symbols followed by merges in
/// the order they were learned.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kFirstSentinel = 3;

  /// Word-level tokenizer over a closed vocabulary (order preserved,
  /// duplicates dropped).
  static Tokenizer word(const std::vector<std::string>& vocabulary, int num_sentinels = 32);
  /// Word-level tokenizer over the sorted word types of a corpus.
  static Tokenizer word_from_corpus(const std::vector<std::string>& lines, int num_sentinels = 32);
  /// Byte-pair merging over normalized corpus lines. Each word is a space
  /// byte followed by its bytes; merges never cross words.
  static Tokenizer train_subword(const std::vector<std::string>& lines, const TokenizerConfig& config);

  static Tokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Tokenizer deserialize(std::string_view text);

  TokenizerMode mode() const { return mode_; }
  /// Number of ids in use; every encoded id is below this.
  int size() const { return static_cast<int>(pieces_.size()); }
  int num_sentinels() const { return num_sentinels_; }
  TokenId sentinel(int i) const;
  bool is_special(TokenId id) const { return id >= 0 && id < content_begin(); }
  TokenId content_begin() const { return kFirstSentinel + num_sentinels_; }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

  /// Normalizes (lowercase, whitespace collapse) before encoding. No eos is
  /// appended.
  std::vector<TokenId> encode(std::string_view text) const;
  std::vector<TokenId> encode_words(const Tokens& words) const;
  /// Specials render as <pad>, <eos>, <unk>, <extra_id_i>. Throws DataError on
  /// an id outside the vocabulary.
  std::string decode(const std::vector<TokenId>& ids) const;
  /// Decodes up to (not including) the first eos, skipping pad.
  std::string decode_until_eos(const std::vector<TokenId>& ids) const;

  /// Whether every word encodes without unk.
  bool covers(const Tokens& words) const;

  /// Stable hash of the id layout, stored in checkpoints to catch mismatches.
  std::uint64_t fingerprint() const;

 private:
  Tokenizer() = default;
  void init_specials(int num_sentinels);
  void rebuild_lookup();
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  TokenizerMode mode_ = TokenizerMode::Word;
  int num_sentinels_ = 0;
  int vocab_cap_ = 0;
  std::vector<std::string> pieces_;  // surface per id (bytes for subword)
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::unordered_map<std::string, TokenId> word_ids_;
  std::unordered_map<std::uint64_t, TokenId> merge_rank_;  // (a,b) -> merged id
};

}  // namespace hierbias
