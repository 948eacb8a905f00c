#include "plaus/corpus/statement.hpp"

#include "plaus/errors.hpp"

namespace plaus {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::subject: return "subject";
    case Role::verb: return "verb";
    case Role::object: return "object";
  }
  return "?";
}

Role parse_role(std::string_view s) {
  if (s == "subject") return Role::subject;
  if (s == "verb") return Role::verb;
  if (s == "object") return Role::object;
  throw ConfigError("unknown role '" + std::string(s) + "'");
}

const Span& SvoStatement::span(Role r) const {
  switch (r) {
    case Role::subject: return subject;
    case Role::verb: return verb;
    case Role::object: return object;
  }
  return subject;
}

void SvoStatement::validate() const {
  const std::size_t n = tokens.size();
  for (Role r : {Role::subject, Role::verb, Role::object}) {
    const Span& s = span(r);
    if (s.empty() || s.end > n) {
      throw ContractError("statement " + id + ": " + std::string(to_string(r)) +
                          " span is empty or outside " + std::to_string(n) + " tokens");
    }
  }
  if (!(subject.end <= verb.begin && verb.end <= object.begin)) {
    throw ContractError("statement " + id + ": spans must be disjoint and ordered subject < verb < object");
  }
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::training: return "training";
    case Split::inference1: return "inference1";
    case Split::inference2: return "inference2";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "training") return Split::training;
  if (s == "inference1") return Split::inference1;
  if (s == "inference2") return Split::inference2;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

const std::vector<SvoStatement>& SplitSet::get(Split s) const {
  switch (s) {
    case Split::training: return training;
    case Split::inference1: return inference1;
    case Split::inference2: return inference2;
  }
  return training;
}

std::vector<SvoStatement>& SplitSet::get(Split s) {
  return const_cast<std::vector<SvoStatement>&>(std::as_const(*this).get(s));
}

std::string_view to_string(ProbeCategory c) {
  switch (c) {
    case ProbeCategory::unaffected_subject: return "unaffected_subject";
    case ProbeCategory::unaffected_object: return "unaffected_object";
    case ProbeCategory::affected_subject: return "affected_subject";
    case ProbeCategory::affected_verb: return "affected_verb";
    case ProbeCategory::affected_object: return "affected_object";
    case ProbeCategory::affected_paraphrase: return "affected_paraphrase";
    case ProbeCategory::affected_reasoning: return "affected_reasoning";
  }
  return "?";
}

ProbeCategory parse_probe_category(std::string_view s) {
  for (auto c : kProbeCategories)
    if (to_string(c) == s) return c;
  throw ConfigError("unknown probe category '" + std::string(s) + "'");
}

bool is_unaffected(ProbeCategory c) {
  return c == ProbeCategory::unaffected_subject || c == ProbeCategory::unaffected_object;
}

std::string_view to_string(ProbeRule r) {
  switch (r) {
    case ProbeRule::match_pre: return "match_pre";
    case ProbeRule::match_source_gold: return "match_source_gold";
    case ProbeRule::match_true: return "match_true";
  }
  return "?";
}

ProbeRule parse_probe_rule(std::string_view s) {
  if (s == "match_pre") return ProbeRule::match_pre;
  if (s == "match_source_gold") return ProbeRule::match_source_gold;
  if (s == "match_true") return ProbeRule::match_true;
  throw ConfigError("unknown probe rule '" + std::string(s) + "'");
}

ProbeRule rule_for(ProbeCategory c) {
  if (is_unaffected(c)) return ProbeRule::match_pre;
  if (c == ProbeCategory::affected_reasoning) return ProbeRule::match_true;
  return ProbeRule::match_source_gold;
}

}  // namespace plaus
