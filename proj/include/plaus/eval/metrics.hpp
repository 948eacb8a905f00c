#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/label.hpp"

namespace plaus {

struct PredictionRow {
  std::string id;
  Label pre = Label::False;
  Label post = Label::False;
  Label gold = Label::False;
};

// Throws ContractError on duplicate ids.
void validate_table(std::span<const PredictionRow> table);

// Percentages in [0, 100]. An empty optional means "not applicable": there were
// no eligible rows, which is different from scoring 0.
using Percent = std::optional<double>;
std::string format_percent(const Percent& p, int decimals = 2);

// Macro-F1 of post-update labels against gold. A class missing from gold
// contributes 0 and logs a warning. Throws ContractError on an empty table.
double macro_f1(std::span<const PredictionRow> table);
double macro_f1(std::span<const Label> predicted, std::span<const Label> gold);
double accuracy(std::span<const PredictionRow> table);
double accuracy(std::span<const Label> predicted, std::span<const Label> gold);

// Of rows the base got wrong, how many the update fixed.
Percent efficacy(std::span<const PredictionRow> table);
// Of rows the base got right, how many the update broke.
Percent relapse(std::span<const PredictionRow> table);

struct ChangeCounts {
  std::size_t fixed = 0;      // wrong -> right
  std::size_t broken = 0;     // right -> wrong
  std::size_t unchanged = 0;  // correctness status kept
};
ChangeCounts change_counts(std::span<const PredictionRow> table);

struct ProbeScores {
  std::map<ProbeCategory, Percent> by_category;
  Percent average_unaffected;  // mean over the two unaffected categories present
  Percent average_affected;    // mean over the five affected categories present
  std::map<ProbeCategory, std::size_t> counts;
};

// pre/post are predictions keyed by probe statement id; source_gold maps each
// source statement id to its gold label. Throws ContractError when a source or
// a prediction is missing.
ProbeScores probe_scores(std::span<const ProbeItem> probes, const std::map<std::string, Label>& source_gold,
                         const std::map<std::string, Label>& pre, const std::map<std::string, Label>& post);

}  // namespace plaus
