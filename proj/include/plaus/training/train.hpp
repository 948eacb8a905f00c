#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/model/transformer.hpp"
#include "plaus/numeric/kernels.hpp"

namespace plaus {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  bool early_stop = false;
  int max_epochs = 10;  // early stop only
  std::string selection_split = "inference1";

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;  // 0 = before training
  double loss = 0.0;
  std::optional<double> f1;  // on the monitored split, when one is given
  std::optional<double> accuracy;
};

struct TrainResult {
  Transformer model;
  std::vector<EpochRecord> curve;
  int selected_epoch = 0;
  bool diverged = false;
};

// Statement tokens followed by the gold label token.
std::vector<int> training_sequence(const SvoStatement& s, const LabelIds& ids);

// Mean next-token cross-entropy over every position of the labelled sequence.
double sequence_loss(const Transformer& model, const SvoStatement& s, const LabelIds& ids);

std::vector<LabelReadout> predict_all(const Transformer& model, std::span<const SvoStatement> statements,
                                      const LabelIds& ids, kernels::Exec exec = kernels::default_exec());
std::vector<Label> predict_labels(const Transformer& model, std::span<const SvoStatement> statements,
                                  const LabelIds& ids, kernels::Exec exec = kernels::default_exec());
double split_f1(const Transformer& model, std::span<const SvoStatement> statements, const LabelIds& ids);

// Next-token training on statement+label sequences. `monitor` (possibly empty)
// is scored after every epoch. A NaN loss stops training and returns the last
// good weights with diverged set.
TrainResult base_finetune(const Transformer& init, std::span<const SvoStatement> train, const TrainConfig& cfg,
                          const LabelIds& ids, std::span<const SvoStatement> monitor = {});

// Exactly cfg.epochs passes over the mispredicted set.
TrainResult repair_finetune_fixed(const Transformer& base, std::span<const SvoStatement> wrong,
                                  const TrainConfig& cfg, const LabelIds& ids);

// Up to cfg.max_epochs passes; returns the epoch with the highest F1 on
// `eval` (earliest on ties, epoch 0 = the base model).
TrainResult repair_finetune_earlystop(const Transformer& base, std::span<const SvoStatement> wrong,
                                      const TrainConfig& cfg, const LabelIds& ids,
                                      std::span<const SvoStatement> eval);

}  // namespace plaus
