#include "hierbias/config.hpp"

#include <charconv>
#include <cstdlib>

#include "hierbias/errors.hpp"
#include "hierbias/text.hpp"

namespace hierbias {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

long long parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    // Accept integral scientific notation such as 1e6.
    const double d = parse_double(text, what);
    if (d != static_cast<double>(static_cast<long long>(d))) {
      throw UsageError(std::string(what) + ": expected an integer, got '" + std::string(text) + "'");
    }
    return static_cast<long long>(d);
  }
  return v;
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw UsageError(std::string(what) + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  const std::string s = to_lower(trim(text));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw UsageError(std::string(what) + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Config Config::parse(std::string_view text) {
  Config c;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    c.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return c;
}

Config Config::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
  return parse(read_file(path));
}

void Config::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + o + "' is not key=value");
    set(std::string(trim(std::string_view(o).substr(0, eq))), std::string(trim(std::string_view(o).substr(eq + 1))));
  }
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

void Config::set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

const std::string& Config::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("missing config key '" + std::string(key) + "'");
  return it->second;
}

std::string Config::get_string(std::string_view key, std::string_view fallback) const {
  return has(key) ? get(key) : std::string(fallback);
}

long long Config::get_int(std::string_view key, long long fallback) const {
  return has(key) ? parse_int(get(key), key) : fallback;
}

double Config::get_double(std::string_view key, double fallback) const {
  return has(key) ? parse_double(get(key), key) : fallback;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  return has(key) ? parse_bool(get(key), key) : fallback;
}

std::vector<std::string> Config::get_list(std::string_view key) const {
  return has(key) ? split_list(get(key)) : std::vector<std::string>{};
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void Config::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

}  // namespace hierbias
