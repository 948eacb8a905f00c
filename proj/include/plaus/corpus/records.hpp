#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"

namespace plaus {

// One JSON object per line. Statement records carry id, split, text, tokens,
// the three spans as [begin, end) pairs and the label.
void save_splits(const std::filesystem::path& path, const SplitSet& splits);
SplitSet load_splits(const std::filesystem::path& path);

void save_probes(const std::filesystem::path& path, const std::vector<ProbeItem>& probes);
std::vector<ProbeItem> load_probes(const std::filesystem::path& path);

struct CorpusStatistics {
  std::map<std::string, std::size_t> split_counts;   // by split name
  std::map<std::string, std::size_t> true_counts;    // gold-True per split
  std::map<std::string, std::size_t> probe_counts;   // by probe category
  std::size_t probe_sources = 0;
  bool operator==(const CorpusStatistics&) const = default;
};

CorpusStatistics compute_statistics(const SplitSet& splits, const std::vector<ProbeItem>& probes);
void save_statistics(const std::filesystem::path& path, const CorpusStatistics& stats);
CorpusStatistics load_statistics(const std::filesystem::path& path);

}  // namespace plaus
