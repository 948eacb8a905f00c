#include "plaus/eval/metrics.hpp"

#include <cstdio>
#include <set>

#include "plaus/errors.hpp"
#include "plaus/log.hpp"

namespace plaus {

void validate_table(std::span<const PredictionRow> table) {
  std::set<std::string> seen;
  for (const auto& r : table)
    if (!seen.insert(r.id).second) throw ContractError("prediction table repeats id " + r.id);
}

std::string format_percent(const Percent& p, int decimals) {
  if (!p) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *p);
  return buf;
}

double macro_f1(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.size() != gold.size()) throw ContractError("prediction and gold lengths differ");
  if (gold.empty()) throw ContractError("F1 of an empty table");
  // tp[c], fp[c], fn[c] for c in {False, True}
  std::size_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0}, support[2] = {0, 0};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = static_cast<std::size_t>(gold[i]), p = static_cast<std::size_t>(predicted[i]);
    ++support[g];
    if (g == p) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    if (support[c] == 0) {
      log_warn(std::string("class ") + std::string(to_string(static_cast<Label>(c))) +
               " is absent from gold; its F1 counts as 0");
      continue;
    }
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
  }
  return 100.0 * sum / 2.0;
}

double accuracy(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.size() != gold.size()) throw ContractError("prediction and gold lengths differ");
  if (gold.empty()) throw ContractError("accuracy of an empty table");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(gold.size());
}

namespace {
void split_columns(std::span<const PredictionRow> t, std::vector<Label>& post, std::vector<Label>& gold) {
  post.reserve(t.size());
  gold.reserve(t.size());
  for (const auto& r : t) {
    post.push_back(r.post);
    gold.push_back(r.gold);
  }
}
}  // namespace

double macro_f1(std::span<const PredictionRow> table) {
  std::vector<Label> post, gold;
  split_columns(table, post, gold);
  return macro_f1(post, gold);
}

double accuracy(std::span<const PredictionRow> table) {
  std::vector<Label> post, gold;
  split_columns(table, post, gold);
  return accuracy(post, gold);
}

Percent efficacy(std::span<const PredictionRow> table) {
  std::size_t eligible = 0, fixed = 0;
  for (const auto& r : table) {
    if (r.pre == r.gold) continue;
    ++eligible;
    fixed += r.post == r.gold;
  }
  if (eligible == 0) return std::nullopt;
  return 100.0 * static_cast<double>(fixed) / static_cast<double>(eligible);
}

Percent relapse(std::span<const PredictionRow> table) {
  std::size_t eligible = 0, broken = 0;
  for (const auto& r : table) {
    if (r.pre != r.gold) continue;
    ++eligible;
    broken += r.post != r.gold;
  }
  if (eligible == 0) return std::nullopt;
  return 100.0 * static_cast<double>(broken) / static_cast<double>(eligible);
}

ChangeCounts change_counts(std::span<const PredictionRow> table) {
  ChangeCounts c;
  for (const auto& r : table) {
    const bool was = r.pre == r.gold, now = r.post == r.gold;
    if (!was && now) ++c.fixed;
    else if (was && !now) ++c.broken;
    else ++c.unchanged;
  }
  return c;
}

ProbeScores probe_scores(std::span<const ProbeItem> probes, const std::map<std::string, Label>& source_gold,
                         const std::map<std::string, Label>& pre, const std::map<std::string, Label>& post) {
  std::map<ProbeCategory, std::size_t> hits;
  ProbeScores out;
  auto lookup = [](const std::map<std::string, Label>& m, const std::string& id, const char* what) {
    auto it = m.find(id);
    if (it == m.end()) throw ContractError(std::string("missing ") + what + " for " + id);
    return it->second;
  };
  for (const auto& p : probes) {
    const Label gold = lookup(source_gold, p.source_id, "source statement");
    const Label after = lookup(post, p.statement.id, "post-update prediction");
    bool ok = false;
    switch (p.rule) {
      case ProbeRule::match_pre: ok = after == lookup(pre, p.statement.id, "pre-update prediction"); break;
      case ProbeRule::match_source_gold: ok = after == gold; break;
      case ProbeRule::match_true: ok = after == Label::True; break;
    }
    ++out.counts[p.category];
    hits[p.category] += ok;
  }
  double sum_u = 0.0, sum_a = 0.0;
  int n_u = 0, n_a = 0;
  for (auto c : kProbeCategories) {
    const std::size_t n = out.counts[c];
    if (n == 0) {
      out.by_category[c] = std::nullopt;
      continue;
    }
    const double v = 100.0 * static_cast<double>(hits[c]) / static_cast<double>(n);
    out.by_category[c] = v;
    if (is_unaffected(c)) {
      sum_u += v;
      ++n_u;
    } else {
      sum_a += v;
      ++n_a;
    }
  }
  if (n_u > 0) out.average_unaffected = sum_u / n_u;
  if (n_a > 0) out.average_affected = sum_a / n_a;
  return out;
}

}  // namespace plaus
