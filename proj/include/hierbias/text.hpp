#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hierbias {

using Tokens = std::vector<std::string>;

Tokens split_words(std::string_view text);
std::string join_words(const Tokens& words);
std::string to_lower(std::string_view text);

/// Lowercases and collapses whitespace runs to single spaces.
std::string normalize_text(std::string_view text);

/// Splits trailing "." / "?" off the last word, lowercases, and returns the
/// word sequence. Used to read prose-form sentences such as "The raven
/// observed the newts." into the token form the grammar works with.
Tokens tokenize_sentence(std::string_view text);

/// Inverse of tokenize_sentence: capitalizes the first word and attaches the
/// terminator.
std::string render_sentence(const Tokens& words);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines);

}  // namespace hierbias
