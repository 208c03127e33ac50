#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace boxcap::textcodec {

inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kUnk = 4;
inline constexpr int kNumSpecial = 5;

/// Textual forms of the special tokens, indexed by id.
inline constexpr std::string_view kSpecialTokens[kNumSpecial] = {"[PAD]", "[SOS]", "[EOS]",
                                                                 "[SEP]", "[UNK]"};

/// Splits text into atomic units: every CJK code point is its own unit, any
/// other run of non-whitespace characters is one unit.
std::vector<std::string> split_units(std::string_view text);

/// Inverse of split_units for normalized text: units are joined by a single
/// space, except that two adjacent CJK units are joined directly.
std::string join_units(std::span<const std::string> units);

class Vocabulary {
 public:
  Vocabulary();

  /// Builds from raw texts; ordering is (frequency desc, token asc) after the specials.
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  /// Drops PAD/SOS/EOS; SEP and UNK keep their textual forms.
  std::string decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Number of units in a text; the caption length used by all filters.
inline std::size_t unit_count(std::string_view text) { return split_units(text).size(); }

}  // namespace boxcap::textcodec
