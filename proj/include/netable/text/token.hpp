#pragma once

#include <cctype>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace netable::text {

inline constexpr const char* pad_token = "<pad>";
inline constexpr const char* unk_token = "<unk>";

// A token with its named-entity annotation. NE surface forms are kept verbatim.
struct Token {
  std::string text;
  bool is_ne = false;
  std::string ne_type;  // empty when unknown

  friend bool operator==(const Token&, const Token&) = default;
};

using TokenSeq = std::vector<Token>;

inline Token word(std::string s) { return Token{std::move(s), false, {}}; }
inline Token entity(std::string s, std::string type) { return Token{std::move(s), true, std::move(type)}; }

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Returns the NE type of a raw token, or nullopt when it is an ordinary word.
using NeClassifier = std::function<std::optional<std::string>(std::string_view)>;

// Whitespace split with . , ? ! split off as their own tokens. Ordinary words
// are lowercased; tokens the classifier recognises are kept verbatim.
inline TokenSeq tokenize(std::string_view text, const NeClassifier& classify = {}) {
  TokenSeq out;
  auto emit = [&](std::string_view piece) {
    if (piece.empty()) return;
    std::optional<std::string> type;
    if (classify) type = classify(piece);
    if (type) out.push_back(entity(std::string(piece), *type));
    else out.push_back(word(lowercase(piece)));
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view piece = text.substr(i, j - i);
    std::vector<std::string_view> trailing;
    while (!piece.empty() && std::string_view(".,?!").find(piece.back()) != std::string_view::npos) {
      // Keep tokens like "1.5" intact; only split trailing punctuation.
      trailing.push_back(piece.substr(piece.size() - 1));
      piece.remove_suffix(1);
    }
    emit(piece);
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) emit(*it);
    i = j;
  }
  return out;
}

inline std::string join(const TokenSeq& seq, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += sep;
    out += seq[i].text;
  }
  return out;
}

}  // namespace netable::text
