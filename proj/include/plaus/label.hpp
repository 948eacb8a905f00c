#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace plaus {

enum class Label : unsigned char { False = 0, True = 1 };

inline constexpr std::string_view to_string(Label l) { return l == Label::True ? "True" : "False"; }

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "True") return Label::True;
  if (s == "False") return Label::False;
  return std::nullopt;
}

inline Label flip(Label l) { return l == Label::True ? Label::False : Label::True; }

// Vocabulary ids of the two label tokens.
struct LabelIds {
  int true_id = -1;
  int false_id = -1;
  int of(Label l) const { return l == Label::True ? true_id : false_id; }
};

}  // namespace plaus
