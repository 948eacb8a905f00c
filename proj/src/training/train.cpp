#include "plaus/training/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

#include "plaus/errors.hpp"
#include "plaus/eval/metrics.hpp"
#include "plaus/log.hpp"
#include "plaus/numeric/ops.hpp"
#include "plaus/numeric/optim.hpp"
#include "plaus/rng.hpp"

namespace plaus {

using kernels::default_exec;
using kernels::Exec;
using kernels::max_threads;

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (early_stop) {
    if (max_epochs < 0 || max_epochs > 10) throw ConfigError("early stopping runs for at most 10 epochs");
    if (selection_split.empty()) throw ConfigError("early stopping needs a selection split");
  }
}

std::vector<int> training_sequence(const SvoStatement& s, const LabelIds& ids) {
  if (!s.label) throw ContractError("statement " + s.id + " has no label to train on");
  std::vector<int> seq = s.tokens;
  seq.push_back(ids.of(*s.label));
  return seq;
}

namespace {

Tensor loss_tensor(const Transformer& model, const SvoStatement& s, const LabelIds& ids) {
  const auto seq = training_sequence(s, ids);
  std::span<const int> input(seq.data(), seq.size() - 1);
  std::span<const int> targets(seq.data() + 1, seq.size() - 1);
  return ops::cross_entropy(model.forward(input), targets);
}

// Per-thread model copies so statement gradients can be taken concurrently.
// Gradients are summed in statement order, so the result does not depend on
// the thread count.
class GradientWorkers {
 public:
  GradientWorkers(const Transformer& master, int n_threads) {
    for (int t = 0; t < n_threads; ++t) {
      replicas_.push_back(master.clone());
      replicas_.back().set_trainable(true);
      params_.push_back(replicas_.back().parameters());
    }
  }

  void sync(const Transformer& master) {
    for (auto& r : replicas_) r.assign_from(master);
  }

  // Returns mean loss; `grads` receives the batch-mean gradient.
  double batch(std::span<const SvoStatement* const> items, const LabelIds& ids,
               std::vector<std::vector<double>>& grads) {
    const std::size_t B = items.size();
    std::vector<std::vector<std::vector<double>>> per(B);
    std::vector<double> losses(B, 0.0);
    std::vector<int> failed(B, 0);
    const int T = static_cast<int>(replicas_.size());
#pragma omp parallel for num_threads(T) schedule(static) if (T > 1)
    for (std::size_t i = 0; i < B; ++i) {
      const int t = T > 1 ? omp_get_thread_num() : 0;
      auto& params = params_[static_cast<std::size_t>(t)];
      try {
        for (auto& p : params) p.zero_grad();
        Tensor loss = loss_tensor(replicas_[static_cast<std::size_t>(t)], *items[i], ids);
        backward(loss);
        losses[i] = loss.item();
        per[i].reserve(params.size());
        for (auto& p : params) per[i].push_back(p.grad());
      } catch (const NumericError&) {
        failed[i] = 1;
      }
    }
    if (std::any_of(failed.begin(), failed.end(), [](int f) { return f != 0; }))
      throw NumericError("non-finite loss during training");
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      total += losses[i];
      for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += per[i][k][j];
    }
    const double inv = 1.0 / static_cast<double>(B);
    for (auto& g : grads)
      for (auto& x : g) x *= inv;
    if (!std::isfinite(total)) throw NumericError("non-finite loss during training");
    return total * inv;
  }

 private:
  std::vector<Transformer> replicas_;
  std::vector<std::vector<Tensor>> params_;
};

int worker_count() { return default_exec() == Exec::parallel ? std::max(1, max_threads()) : 1; }

struct Trainer {
  Transformer model;
  std::vector<Tensor> params;
  OptimizerState opt;
  OptimizerConfig ocfg;
  GradientWorkers workers;
  std::vector<std::vector<double>> grads;
  Rng rng;

  Trainer(const Transformer& init, const TrainConfig& cfg)
      : model(init.clone()), workers(model, worker_count()), rng(derive_seed(cfg.seed, "train.order")) {
    model.set_trainable(false);
    params = model.parameters();
    ocfg.lr = cfg.lr;
    for (const auto& p : params) grads.emplace_back(p.size(), 0.0);
  }

  // One pass in a freshly shuffled order. Returns the mean loss.
  double epoch(std::span<const SvoStatement> data, std::size_t batch_size, const LabelIds& ids) {
    std::vector<const SvoStatement*> order;
    for (const auto& s : data) order.push_back(&s);
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::size_t e = std::min(order.size(), b + batch_size);
      workers.sync(model);
      const double l = workers.batch({order.data() + b, e - b}, ids, grads);
      sgd_adam_step(params, grads, opt, ocfg);
      sum += l * static_cast<double>(e - b);
    }
    return sum / static_cast<double>(order.size());
  }
};

double mean_loss(const Transformer& m, std::span<const SvoStatement> data, const LabelIds& ids) {
  if (data.empty()) return 0.0;
  std::vector<double> l(data.size());
#pragma omp parallel for schedule(static) if (default_exec() == Exec::parallel)
  for (std::size_t i = 0; i < data.size(); ++i) l[i] = sequence_loss(m, data[i], ids);
  return std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(data.size());
}

void score(EpochRecord& r, const Transformer& m, std::span<const SvoStatement> split, const LabelIds& ids) {
  if (split.empty()) return;
  const auto pred = predict_labels(m, split, ids);
  std::vector<Label> gold;
  for (const auto& s : split) gold.push_back(*s.label);
  r.f1 = macro_f1(pred, gold);
  r.accuracy = accuracy(pred, gold);
}

// Shared loop. With `select_on` non-empty, keeps the best-F1 epoch.
TrainResult run(const Transformer& init, std::span<const SvoStatement> data, const TrainConfig& cfg, int epochs,
                const LabelIds& ids, std::span<const SvoStatement> monitor, bool select_best) {
  cfg.validate();
  TrainResult out;
  Trainer tr(init, cfg);
  EpochRecord e0;
  e0.epoch = 0;
  e0.loss = mean_loss(tr.model, data, ids);
  score(e0, tr.model, monitor, ids);
  out.curve.push_back(e0);

  Transformer best = tr.model.clone();
  double best_f1 = e0.f1.value_or(0.0);
  Transformer last_good = tr.model.clone();
  for (int ep = 1; ep <= epochs && !data.empty(); ++ep) {
    EpochRecord r;
    r.epoch = ep;
    try {
      r.loss = tr.epoch(data, cfg.batch_size, ids);
    } catch (const NumericError& err) {
      log_warn("training diverged in epoch " + std::to_string(ep) + " (" + err.what() +
               "); keeping the last good weights");
      out.diverged = true;
      tr.model.assign_from(last_good);
      break;
    }
    score(r, tr.model, monitor, ids);
    out.curve.push_back(r);
    last_good.assign_from(tr.model);
    if (select_best && r.f1 && *r.f1 > best_f1) {
      best_f1 = *r.f1;
      best.assign_from(tr.model);
      out.selected_epoch = ep;
    }
    if (!select_best) out.selected_epoch = ep;
  }
  out.model = select_best ? std::move(best) : std::move(tr.model);
  out.model.set_trainable(false);
  return out;
}

}  // namespace

double sequence_loss(const Transformer& model, const SvoStatement& s, const LabelIds& ids) {
  return loss_tensor(model, s, ids).item();
}

std::vector<LabelReadout> predict_all(const Transformer& model, std::span<const SvoStatement> statements,
                                      const LabelIds& ids, Exec exec) {
  std::vector<LabelReadout> out(statements.size());
#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::parallel)
  for (std::size_t i = 0; i < statements.size(); ++i) out[i] = model.predict(statements[i].tokens, ids);
  return out;
}

std::vector<Label> predict_labels(const Transformer& model, std::span<const SvoStatement> statements,
                                  const LabelIds& ids, Exec exec) {
  std::vector<Label> out;
  for (const auto& r : predict_all(model, statements, ids, exec)) out.push_back(r.label);
  return out;
}

double split_f1(const Transformer& model, std::span<const SvoStatement> statements, const LabelIds& ids) {
  std::vector<Label> gold;
  for (const auto& s : statements) gold.push_back(*s.label);
  return macro_f1(predict_labels(model, statements, ids), gold);
}

TrainResult base_finetune(const Transformer& init, std::span<const SvoStatement> train, const TrainConfig& cfg,
                          const LabelIds& ids, std::span<const SvoStatement> monitor) {
  if (train.empty()) throw ContractError("base finetuning needs a non-empty training split");
  return run(init, train, cfg, cfg.epochs, ids, monitor, false);
}

TrainResult repair_finetune_fixed(const Transformer& base, std::span<const SvoStatement> wrong,
                                  const TrainConfig& cfg, const LabelIds& ids) {
  if (wrong.empty()) log_info("repair finetuning: no mispredicted statements, returning the base model");
  return run(base, wrong, cfg, cfg.epochs, ids, {}, false);
}

TrainResult repair_finetune_earlystop(const Transformer& base, std::span<const SvoStatement> wrong,
                                      const TrainConfig& cfg, const LabelIds& ids,
                                      std::span<const SvoStatement> eval) {
  if (eval.empty()) throw ContractError("early stopping needs a non-empty evaluation split");
  if (wrong.empty()) log_info("repair finetuning: no mispredicted statements, returning the base model");
  return run(base, wrong, cfg, cfg.max_epochs, ids, eval, true);
}

}  // namespace plaus
