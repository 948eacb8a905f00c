#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plaus/label.hpp"

namespace plaus {

// Half-open token index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  std::size_t first() const { return begin; }
  std::size_t last() const { return end - 1; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Span&) const = default;
};

enum class Role { subject, verb, object };
std::string_view to_string(Role r);
Role parse_role(std::string_view s);

struct SvoStatement {
  std::string id;
  std::string text;
  std::vector<int> tokens;
  Span subject, verb, object;
  std::optional<Label> label;

  const Span& span(Role r) const;
  // Checks disjoint, ordered, in-range spans. Throws ContractError.
  void validate() const;
  bool operator==(const SvoStatement&) const = default;
};

enum class Split { training, inference1, inference2 };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct SplitSet {
  std::vector<SvoStatement> training;
  std::vector<SvoStatement> inference1;
  std::vector<SvoStatement> inference2;

  const std::vector<SvoStatement>& get(Split s) const;
  std::vector<SvoStatement>& get(Split s);
  bool operator==(const SplitSet&) const = default;
};

enum class ProbeCategory {
  unaffected_subject,
  unaffected_object,
  affected_subject,
  affected_verb,
  affected_object,
  affected_paraphrase,
  affected_reasoning,
};
inline constexpr ProbeCategory kProbeCategories[] = {
    ProbeCategory::unaffected_subject,  ProbeCategory::unaffected_object,
    ProbeCategory::affected_subject,    ProbeCategory::affected_verb,
    ProbeCategory::affected_object,     ProbeCategory::affected_paraphrase,
    ProbeCategory::affected_reasoning,
};
std::string_view to_string(ProbeCategory c);
ProbeCategory parse_probe_category(std::string_view s);
bool is_unaffected(ProbeCategory c);

// How a probe's post-update prediction is scored.
enum class ProbeRule { match_pre, match_source_gold, match_true };
std::string_view to_string(ProbeRule r);
ProbeRule parse_probe_rule(std::string_view s);
ProbeRule rule_for(ProbeCategory c);

struct ProbeItem {
  ProbeCategory category = ProbeCategory::affected_subject;
  std::string source_id;
  SvoStatement statement;  // label optional for unaffected categories
  ProbeRule rule = ProbeRule::match_source_gold;
  bool operator==(const ProbeItem&) const = default;
};

}  // namespace plaus
