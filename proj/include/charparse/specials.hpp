#pragma once

#include <array>
#include <string_view>

namespace charparse {

inline constexpr std::string_view kClsWord = "[CLS]";
inline constexpr std::string_view kSepWord = "[SEP]";
inline constexpr std::string_view kMaskWord = "[MASK]";
inline constexpr std::string_view kPadWord = "[PAD]";
inline constexpr std::string_view kUnkWord = "[UNK]";

/// Special word forms, in the order their reserved ids are assigned.
inline constexpr std::array<std::string_view, 5> kSpecialWords = {kClsWord, kSepWord, kMaskWord,
                                                                  kPadWord, kUnkWord};

inline bool is_special_word(std::string_view w) {
  for (auto s : kSpecialWords) {
    if (s == w) return true;
  }
  return false;
}

}  // namespace charparse
