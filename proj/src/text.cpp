#include "hierbias/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "hierbias/errors.hpp"

namespace hierbias {

Tokens split_words(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string join_words(const Tokens& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_text(std::string_view text) {
  return join_words(split_words(to_lower(text)));
}

Tokens tokenize_sentence(std::string_view text) {
  Tokens words = split_words(to_lower(text));
  if (!words.empty()) {
    std::string& last = words.back();
    if (last.size() > 1 && (last.back() == '.' || last.back() == '?')) {
      const std::string term(1, last.back());
      last.pop_back();
      words.push_back(term);
    }
  }
  return words;
}

std::string render_sentence(const Tokens& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const bool terminator = (words[i] == "." || words[i] == "?");
    if (i && !terminator) out.push_back(' ');
    out += words[i];
  }
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::string buf;
  for (const auto& l : lines) {
    buf += l;
    buf.push_back('\n');
  }
  write_file(path, buf);
}

}  // namespace hierbias
