#include "plaus/editing/edit.hpp"

#include <cmath>
#include <cstdio>
#include <exception>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "internal/jsonl.hpp"
#include "plaus/log.hpp"
#include "plaus/numeric/ops.hpp"
#include "plaus/numeric/optim.hpp"
#include "plaus/tracing/trace.hpp"

namespace plaus {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void EditConfig::validate(int n_layers) const {
  if (layers.start < 1 || layers.end > n_layers || layers.start > layers.end) {
    throw ContractError("edit layers " + layers.str() + " outside 1-" + std::to_string(n_layers));
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("edit learning rate must be positive");
  if (!(kl_factor >= 0.0) || !std::isfinite(kl_factor)) throw ConfigError("kl_factor must be non-negative");
  if (cutoff && !(*cutoff > 0.0 && *cutoff <= 1.0)) throw ConfigError("cutoff must lie in (0, 1]");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
  if (!(clamp_norm >= 0.0) || !std::isfinite(clamp_norm)) throw ConfigError("clamp_norm must be non-negative");
  if (!(cov_weight >= 0.0) || !std::isfinite(cov_weight)) throw ConfigError("cov_weight must be non-negative");
}

std::string_view to_string(StopReason r) { return r == StopReason::cutoff ? "cutoff" : "max_steps"; }

const std::vector<double>& CovarianceStats::at(int layer) const {
  auto it = c.find(layer);
  if (it == c.end()) throw ContractError("no key covariance for layer " + std::to_string(layer));
  return it->second;
}

CovarianceStats estimate_covariance(const Transformer& model, std::span<const SvoStatement> sample,
                                    std::span<const int> layers, double damping, kernels::Exec exec) {
  if (!(damping > 0.0)) throw ConfigError("covariance damping must be positive");
  if (sample.empty()) throw ContractError("covariance estimate needs a non-empty sample");
  const int L = model.config().n_layers;
  for (int l : layers)
    if (l < 1 || l > L) throw ContractError("covariance layer " + std::to_string(l) + " out of range");

  std::vector<ActivationTrace> traces(sample.size());
#pragma omp parallel for schedule(dynamic, 8) if (exec == kernels::Exec::parallel)
  for (std::size_t i = 0; i < sample.size(); ++i) {
    ForwardOptions fo;
    fo.trace = &traces[i];
    fo.final_only = true;
    model.forward(sample[i].tokens, fo);
  }
  std::size_t n = 0;
  for (const auto& s : sample) n += s.tokens.size();

  CovarianceStats out;
  out.dim = model.config().d_mlp;
  out.n_samples = n;
  out.damping = damping;
  const auto f = static_cast<std::size_t>(out.dim);
  for (int l : layers) {
    Matrix keys(static_cast<Eigen::Index>(n), out.dim);
    Eigen::Index row = 0;
    for (const auto& t : traces)
      for (std::size_t i = 0; i < t.n_tokens(); ++i, ++row) {
        const auto k = t.key(i, l);
        for (std::size_t j = 0; j < f; ++j) keys(row, static_cast<Eigen::Index>(j)) = k[j];
      }
    Matrix c = keys.transpose() * keys / static_cast<double>(n);
    c = 0.5 * (c + c.transpose()).eval();
    out.c[l].assign(c.data(), c.data() + c.size());
  }
  return out;
}

ResidualTarget compute_residual(const Transformer& model, const EditRequest& request, const LabelIds& ids) {
  const auto& s = request.statement;
  const auto& cfg = request.config;
  cfg.validate(model.config().n_layers);
  s.validate();

  ResidualTarget r;
  r.id = s.id;
  r.tokens = s.tokens;
  r.position = s.span(cfg.token).last();
  r.layer = cfg.layers.end;
  r.target = request.target;
  const std::size_t T = s.tokens.size();
  const auto d = static_cast<std::size_t>(model.config().d_model);
  const auto V = static_cast<std::size_t>(model.config().vocab_size);

  ActivationTrace trace;
  ForwardOptions fo;
  fo.trace = &trace;
  const Tensor base_logits = model.forward(s.tokens, fo);
  const auto h = trace.hidden(r.position, r.layer);
  double h_sq = 0.0;
  for (double x : h) h_sq += x * x;
  const Tensor ref = ops::softmax_rows(ops::select_row(base_logits, r.position)).detach();

  Tensor delta = Tensor::zeros({1, d}, true);
  std::vector<Tensor> params = {delta};
  OptimizerState state;
  OptimizerConfig ocfg;
  ocfg.lr = cfg.lr;
  const std::size_t cols[2] = {static_cast<std::size_t>(ids.of(request.target)),
                               static_cast<std::size_t>(ids.of(flip(request.target)))};
  if (cols[0] >= V || cols[1] >= V) throw ContractError("label ids outside the vocabulary");

  for (int step = 0;; ++step) {
    HiddenDelta hd{r.position, r.layer, delta};
    ForwardOptions o;
    o.delta = &hd;
    const Tensor logits = model.forward(s.tokens, o);
    const Tensor two = ops::log_softmax_rows(ops::gather_cols(ops::select_row(logits, T - 1), cols));
    const double p = std::exp(two[0]);
    r.trajectory.push_back(p);
    if (cfg.cutoff && p > *cfg.cutoff) {
      r.stop = StopReason::cutoff;
      break;
    }
    if (step == cfg.max_steps) {
      r.stop = StopReason::max_steps;
      break;
    }
    Tensor loss = ops::scale(ops::sum(ops::slice_cols(two, 0, 1)), -1.0);
    if (cfg.kl_factor > 0.0) {
      // Cross-entropy against the unedited distribution; differs from the KL
      // divergence by a constant.
      const Tensor logq = ops::log_softmax_rows(ops::select_row(logits, r.position));
      loss = ops::add(loss, ops::scale(ops::sum(ops::mul(ref, logq)), -cfg.kl_factor));
    }
    if (cfg.weight_decay > 0.0 && h_sq > 0.0)
      loss = ops::add(loss, ops::scale(ops::sum(ops::mul(delta, delta)), cfg.weight_decay / h_sq));
    if (!std::isfinite(loss.item())) {
      log_warn("residual optimization for " + s.id + " hit a non-finite loss at step " + std::to_string(step));
      throw NumericError("non-finite loss while optimizing the residual of " + s.id);
    }
    delta.zero_grad();
    backward(loss);
    step_on_grads(params, state, ocfg);
    if (cfg.clamp_norm > 0.0) {
      auto dv = delta.mutable_data();
      double sq = 0.0;
      for (double x : dv) sq += x * x;
      const double cap = cfg.clamp_norm * std::sqrt(h_sq);
      if (sq > cap * cap)
        for (auto& x : dv) x *= cap / std::sqrt(sq);
    }
    ++r.steps;
  }
  r.p_initial = r.trajectory.front();
  r.p_final = r.trajectory.back();
  r.delta = delta.to_vector();
  if (r.p_final < r.p_initial) {
    r.reverted = true;
    r.p_final = r.p_initial;
    std::fill(r.delta.begin(), r.delta.end(), 0.0);
  }
  r.z.resize(d);
  for (std::size_t j = 0; j < d; ++j) r.z[j] = h[j] + r.delta[j];
  return r;
}

SpreadResult spread_update(const Transformer& model, std::span<const ResidualTarget> targets,
                           const LayerWindow& window, const CovarianceStats& stats, double cov_weight) {
  const auto& mc = model.config();
  if (window.start < 1 || window.end > mc.n_layers || window.start > window.end) {
    throw ContractError("edit layers " + window.str() + " outside 1-" + std::to_string(mc.n_layers));
  }
  if (stats.dim != mc.d_mlp) throw ContractError("key covariance dimension does not match the model");
  for (int l : window.layers()) stats.at(l);
  for (const auto& t : targets) {
    if (t.layer != window.end) throw ContractError("target " + t.id + " was optimized for another window top");
    if (t.z.size() != static_cast<std::size_t>(mc.d_model)) throw ContractError("target " + t.id + " has a bad z");
  }

  SpreadResult out{model.clone(), {}};
  if (targets.empty()) return out;
  const auto n = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index f = mc.d_mlp, d = mc.d_model;

  for (int l : window.layers()) {
    Matrix K(f, n), R(d, n);
    double norm = 0.0;
    const double remaining = static_cast<double>(window.end - l + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = targets[static_cast<std::size_t>(i)];
      ActivationTrace trace;
      ForwardOptions fo;
      fo.trace = &trace;
      fo.final_only = true;
      out.model.forward(t.tokens, fo);
      const auto k = trace.key(t.position, l);
      const auto h = trace.hidden(t.position, window.end);
      double sq = 0.0;
      for (Eigen::Index j = 0; j < f; ++j) K(j, i) = k[static_cast<std::size_t>(j)];
      for (Eigen::Index j = 0; j < d; ++j) {
        const double r = t.z[static_cast<std::size_t>(j)] - h[static_cast<std::size_t>(j)];
        sq += r * r;
        R(j, i) = r / remaining;
      }
      norm += std::sqrt(sq);
    }

    const Eigen::Map<const Matrix> C(stats.at(l).data(), f, f);
    Matrix A = cov_weight * C + K * K.transpose();
    A.diagonal().array() += stats.damping;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) {
      throw EditError("key covariance at layer " + std::to_string(l) + " is not positive definite");
    }
    const Matrix X = llt.solve(K * R.transpose());  // f x d, same layout as w_out
    if (!X.allFinite()) throw EditError("non-finite weight update at layer " + std::to_string(l));

    auto w = out.model.block(l).w_out.mutable_data();
    for (Eigen::Index j = 0; j < f; ++j)
      for (Eigen::Index o = 0; o < d; ++o) {
        const double x = X(j, o);
        if (x != 0.0) w[static_cast<std::size_t>(j * d + o)] += x;
      }
    out.layers.push_back({l, norm / static_cast<double>(n), X.norm()});
  }
  return out;
}

std::string residual_cache_key(const EditRequest& r) {
  const auto& c = r.config;
  char buf[256];
  std::snprintf(buf, sizeof buf, "|%s|%s|%d|%.17g|%.17g|%.17g|%d|%.17g|%.17g",
                std::string(to_string(r.target)).c_str(), std::string(to_string(c.token)).c_str(), c.layers.end, c.lr,
                c.kl_factor, c.cutoff.value_or(-1.0), c.max_steps, c.weight_decay, c.clamp_norm);
  return r.statement.id + buf;
}

namespace {

bool same_config(const EditConfig& a, const EditConfig& b) {
  return a.token == b.token && a.layers == b.layers && a.lr == b.lr && a.kl_factor == b.kl_factor &&
         a.cutoff == b.cutoff && a.max_steps == b.max_steps && a.weight_decay == b.weight_decay &&
         a.clamp_norm == b.clamp_norm && a.cov_weight == b.cov_weight;
}

}  // namespace

EditOutcome apply_edits(const Transformer& model, std::span<const EditRequest> requests, const LabelIds& ids,
                        const CovarianceStats& stats, ResidualCache* cache, kernels::Exec exec) {
  if (requests.empty()) throw ContractError("apply_edits needs at least one request");
  const EditConfig& cfg = requests.front().config;
  cfg.validate(model.config().n_layers);
  for (const auto& r : requests)
    if (!same_config(r.config, cfg)) throw ContractError("edit requests in one batch must share a config");

  EditOutcome out;
  std::vector<const EditRequest*> kept;
  std::vector<double> pre_true;
  for (const auto& r : requests) {
    const auto pre = model.predict(r.statement.tokens, ids);
    if (pre.label == r.target) {
      ++out.n_filtered;
      continue;
    }
    kept.push_back(&r);
    pre_true.push_back(pre.p_true);
  }
  if (kept.empty()) {
    out.model = model.clone();
    return out;
  }

  std::vector<ResidualTarget> targets(kept.size());
  std::vector<int> have(kept.size(), 0);
  std::vector<std::string> keys(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    keys[i] = residual_cache_key(*kept[i]);
    if (cache) {
      auto it = cache->find(keys[i]);
      if (it != cache->end()) {
        targets[i] = it->second;
        have[i] = 1;
      }
    }
  }
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1) if (exec == kernels::Exec::parallel)
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (have[i]) continue;
    try {
      targets[i] = compute_residual(model, *kept[i], ids);
    } catch (...) {
#pragma omp critical(edit_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  if (cache)
    for (std::size_t i = 0; i < kept.size(); ++i)
      if (!have[i]) cache->emplace(keys[i], targets[i]);

  auto spread = spread_update(model, targets, cfg.layers, stats, cfg.cov_weight);
  out.model = std::move(spread.model);
  out.layers = std::move(spread.layers);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto post = out.model.predict(kept[i]->statement.tokens, ids);
    EditRecord rec;
    rec.id = kept[i]->statement.id;
    rec.token = cfg.token;
    rec.layers = cfg.layers;
    rec.steps = targets[i].steps;
    rec.stop = targets[i].stop;
    rec.pre_p_true = pre_true[i];
    rec.post_p_true = post.p_true;
    rec.success = post.label == kept[i]->target;
    out.records.push_back(std::move(rec));
  }
  return out;
}

void save_edit_report(const std::filesystem::path& path, std::span<const EditRecord> records) {
  detail::JsonlWriter w(path);
  for (const auto& r : records) {
    w.write({{"id", r.id},
             {"edit_token", to_string(last_of(r.token))},
             {"layers", r.layers.str()},
             {"steps", r.steps},
             {"stop_reason", to_string(r.stop)},
             {"pre_p_true", r.pre_p_true},
             {"post_p_true", r.post_p_true},
             {"success", r.success}});
  }
  w.close();
}

std::vector<EditRecord> load_edit_report(const std::filesystem::path& path) {
  std::vector<EditRecord> out;
  for (const auto& rec : detail::read_jsonl(path)) {
    EditRecord r;
    r.id = rec.get<std::string>("id");
    const auto tok = parse_token_class(rec.get<std::string>("edit_token"));
    if (tok == TokenClass::last_subject) r.token = Role::subject;
    else if (tok == TokenClass::last_verb) r.token = Role::verb;
    else if (tok == TokenClass::last_object) r.token = Role::object;
    else rec.fail("edit_token must be a last_{subject,verb,object} class");
    r.layers = parse_window(rec.get<std::string>("layers"));
    r.steps = rec.get<int>("steps");
    const auto stop = rec.get<std::string>("stop_reason");
    if (stop != "cutoff" && stop != "max_steps") rec.fail("unknown stop_reason '" + stop + "'");
    r.stop = stop == "cutoff" ? StopReason::cutoff : StopReason::max_steps;
    r.pre_p_true = rec.get<double>("pre_p_true");
    r.post_p_true = rec.get<double>("post_p_true");
    r.success = rec.get<bool>("success");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace plaus
