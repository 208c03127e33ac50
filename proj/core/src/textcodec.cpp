#include "boxcap/textcodec.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace boxcap::textcodec {
namespace {

// Length of the UTF-8 sequence starting with byte c (1 for invalid lead bytes).
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

char32_t decode_code_point(std::string_view s) {
  const auto b = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  switch (s.size()) {
    case 2: return ((b(0) & 0x1F) << 6) | (b(1) & 0x3F);
    case 3: return ((b(0) & 0x0F) << 12) | ((b(1) & 0x3F) << 6) | (b(2) & 0x3F);
    case 4:
      return ((b(0) & 0x07) << 18) | ((b(1) & 0x3F) << 12) | ((b(2) & 0x3F) << 6) | (b(3) & 0x3F);
    default: return b(0);
  }
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFFEF);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool unit_is_cjk(const std::string& u) {
  const std::size_t n = utf8_length(static_cast<unsigned char>(u[0]));
  return n > 1 && n == u.size() && is_cjk(decode_code_point(u));
}

}  // namespace

std::vector<std::string> split_units(std::string_view text) {
  std::vector<std::string> units;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) units.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    if (n == 1 && is_space(text[i])) {
      flush();
      ++i;
      continue;
    }
    const std::string_view cp = text.substr(i, n);
    if (n > 1 && is_cjk(decode_code_point(cp))) {
      flush();
      units.emplace_back(cp);
    } else {
      current.append(cp);
    }
    i += n;
  }
  flush();
  return units;
}

std::string join_units(std::span<const std::string> units) {
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0 && !(unit_is_cjk(units[i - 1]) && unit_is_cjk(units[i]))) out.push_back(' ');
    out += units[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecialTokens) {
    index_.emplace(std::string(s), static_cast<int>(tokens_.size()));
    tokens_.emplace_back(s);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> freq;
  for (const std::string& t : texts)
    for (std::string& u : split_units(t)) ++freq[std::move(u)];
  for (std::string_view s : kSpecialTokens) freq.erase(std::string(s));

  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [tok, count] : items) {
    v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecial) throw std::invalid_argument("vocabulary: missing special tokens");
  for (int i = 0; i < kNumSpecial; ++i)
    if (tokens[static_cast<std::size_t>(i)] != kSpecialTokens[i])
      throw std::invalid_argument("vocabulary: special token " + std::string(kSpecialTokens[i]) +
                                  " must have id " + std::to_string(i));
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (std::string& t : tokens) {
    if (!v.index_.emplace(t, static_cast<int>(v.tokens_.size())).second)
      throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& u : split_units(text)) ids.push_back(id(u));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> units;
  for (int id : ids) {
    if (id == kPad || id == kSos || id == kEos) continue;
    units.push_back(token(id));
  }
  return join_units(units);
}

}  // namespace boxcap::textcodec
