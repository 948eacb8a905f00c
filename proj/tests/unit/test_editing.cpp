#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>

#include "plaus/editing/edit.hpp"
#include "plaus/model/checkpoint.hpp"
#include "reference_model.hpp"
#include "support.hpp"

using namespace plaus;
using namespace plaus::testing;

namespace {

constexpr LabelIds kIds{10, 11};

SvoStatement statement(std::string id, std::vector<int> tokens, Label gold) {
  SvoStatement s;
  s.id = std::move(id);
  s.tokens = std::move(tokens);
  s.subject = {1, 2};
  s.verb = {2, 3};
  s.object = {4, s.tokens.size()};
  s.label = gold;
  return s;
}

Transformer random_model(std::uint64_t seed, int layers = 3, int d_model = 8) {
  Transformer m(tiny_config(12, layers, d_model), seed);
  randomize(m, seed + 1);
  return m;
}

std::vector<double> key_at(const Transformer& m, const std::vector<int>& tokens, std::size_t pos, int layer) {
  auto [logits, trace] = m.forward_traced(tokens);
  const auto k = trace.key(pos, layer);
  return {k.begin(), k.end()};
}

std::vector<double> hidden_at(const Transformer& m, const std::vector<int>& tokens, std::size_t pos, int layer) {
  auto [logits, trace] = m.forward_traced(tokens);
  const auto h = trace.hidden(pos, layer);
  return {h.begin(), h.end()};
}

CovarianceStats zero_stats(const Transformer& m, double damping) {
  CovarianceStats s;
  s.dim = m.config().d_mlp;
  s.damping = damping;
  for (int l = 1; l <= m.config().n_layers; ++l) s.c[l].assign(static_cast<std::size_t>(s.dim * s.dim), 0.0);
  return s;
}

// Gauss-Jordan elimination with partial pivoting; a is n x n row-major,
// b is n x m. Returns a^{-1} b.
std::vector<double> solve(std::vector<double> a, std::vector<double> b, std::size_t n, std::size_t m) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[piv * n + j]);
    for (std::size_t j = 0; j < m; ++j) std::swap(b[c * m + j], b[piv * m + j]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t j = 0; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
      for (std::size_t j = 0; j < m; ++j) b[r * m + j] -= f * b[c * m + j];
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) b[r * m + j] /= a[r * n + r];
  return b;
}

}  // namespace

TEST_CASE("key covariance") {
  const auto model = random_model(2);
  SUBCASE("a repeated key gives its outer product") {
    // Only the tokens matter here; every position carries the same key.
    const std::vector<SvoStatement> sample(4, statement("one", {3}, Label::True));
    const std::vector<int> layers = {2};
    const auto stats = estimate_covariance(model, sample, layers, 1e-2);
    const auto k = key_at(model, {3}, 0, 2);
    const auto& c = stats.at(2);
    const std::size_t f = k.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t j = 0; j < f; ++j) worst = std::max(worst, std::abs(c[i * f + j] - k[i] * k[j]));
    CHECK(worst < 1e-12);
    CHECK(stats.n_samples == 4);
  }
  SUBCASE("symmetric and positive definite once damped") {
    std::vector<SvoStatement> sample;
    for (int i = 0; i < 6; ++i)
      sample.push_back(statement("s" + std::to_string(i), {i, i + 1, 2, 9 - i, 4, 5}, Label::True));
    const std::vector<int> layers = {1, 2, 3};
    const auto stats = estimate_covariance(model, sample, layers, 1e-2);
    const auto f = static_cast<Eigen::Index>(stats.dim);
    for (int l : layers) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(
          stats.at(l).data(), f, f);
      CHECK((c - c.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      Eigen::MatrixXd damped = c;
      damped.diagonal().array() += stats.damping;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(damped);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }
  SUBCASE("bad inputs") {
    std::vector<SvoStatement> sample = {statement("s", {1, 2, 3, 4, 5}, Label::True)};
    const std::vector<int> layers = {1};
    CHECK_THROWS_AS(estimate_covariance(model, sample, layers, 0.0), ConfigError);
    CHECK_THROWS_AS(estimate_covariance(model, {}, layers, 1e-2), ContractError);
    const std::vector<int> bad = {4};
    CHECK_THROWS_AS(estimate_covariance(model, sample, bad, 1e-2), ContractError);
  }
}

TEST_CASE("residual optimization") {
  const auto model = random_model(4);
  const auto s = statement("r", {0, 1, 2, 3, 4, 5}, Label::True);
  const auto pre = model.predict(s.tokens, kIds);
  EditRequest req{s, flip(pre.label), {}};
  req.config.token = Role::verb;
  req.config.layers = {1, 2};

  SUBCASE("zero steps leave delta at zero") {
    req.config.max_steps = 0;
    const auto r = compute_residual(model, req, kIds);
    CHECK(r.steps == 0);
    CHECK(r.stop == StopReason::max_steps);
    for (double x : r.delta) CHECK(x == 0.0);
    CHECK(r.z == hidden_at(model, s.tokens, 2, 2));
    CHECK(r.trajectory.size() == 1);
  }
  SUBCASE("a cutoff already met stops at step zero") {
    req.target = pre.label;
    req.config.cutoff = pre.p(pre.label) - 1e-3;
    const auto r = compute_residual(model, req, kIds);
    CHECK(r.stop == StopReason::cutoff);
    CHECK(r.steps == 0);
  }
  SUBCASE("the patched delta reaches the target") {
    req.config.token = Role::object;
    req.config.lr = 0.5;
    req.config.cutoff = 0.9;
    const auto r = compute_residual(model, req, kIds);
    CHECK(r.p_final >= r.p_initial);
    CHECK(r.p_final > 0.9);
    CHECK(r.stop == StopReason::cutoff);
    CHECK(r.layer == 2);
    CHECK(r.position == 5);
    // The recorded probability is what a forward pass with z patched in gives.
    InterventionSpec spec;
    spec.patches.push_back({r.position, r.layer, Site::hidden, r.z});
    const auto logits = model.forward_intervened(s.tokens, spec);
    CHECK(label_from_logits(logits, kIds).p(req.target) == doctest::Approx(r.p_final).epsilon(1e-9));
  }
  SUBCASE("a larger kl factor never grows the residual") {
    req.config.max_steps = 40;
    double prev = INFINITY;
    for (double kl : {0.0, 0.0625, 1.0, 10.0, 1000.0}) {
      req.config.kl_factor = kl;
      const auto r = compute_residual(model, req, kIds);
      double n = 0.0;
      for (double x : r.delta) n += x * x;
      n = std::sqrt(n);
      CHECK(n <= prev + 1e-12);
      prev = n;
    }
  }
  SUBCASE("config validation") {
    req.config.layers = {0, 2};
    CHECK_THROWS_AS(compute_residual(model, req, kIds), ContractError);
    req.config.layers = {2, 4};
    CHECK_THROWS_AS(compute_residual(model, req, kIds), ContractError);
    req.config.layers = {1, 2};
    req.config.cutoff = 1.5;
    CHECK_THROWS_AS(compute_residual(model, req, kIds), ConfigError);
    req.config.cutoff.reset();
    req.config.kl_factor = -1.0;
    CHECK_THROWS_AS(compute_residual(model, req, kIds), ConfigError);
  }
}

TEST_CASE("spreading residuals over MLP weights") {
  const auto model = random_model(6);
  const auto s = statement("k", {0, 1, 2, 3, 4, 5}, Label::True);

  SUBCASE("zero residuals leave the weights bit-identical") {
    ResidualTarget t;
    t.id = s.id;
    t.tokens = s.tokens;
    t.position = 2;
    t.layer = 3;
    t.z = hidden_at(model, s.tokens, 2, 3);
    std::vector<ResidualTarget> ts = {t, t};
    const auto out = spread_update(model, ts, {1, 3}, zero_stats(model, 1e-2));
    CHECK(out.model.same_weights(model));
    CHECK(out.layers.size() == 3);
  }

  SUBCASE("a single edit in a single layer writes the requested increment") {
    for (int l = 1; l <= 3; ++l) {
      const std::size_t pos = 3;
      const auto h = hidden_at(model, s.tokens, pos, l);
      ResidualTarget t;
      t.id = s.id;
      t.tokens = s.tokens;
      t.position = pos;
      t.layer = l;
      t.z = h;
      for (std::size_t j = 0; j < h.size(); ++j) t.z[j] += 0.3 * std::cos(static_cast<double>(j + l));
      const auto k = key_at(model, s.tokens, pos, l);
      std::vector<ResidualTarget> ts = {t};
      const auto out = spread_update(model, ts, {l, l}, zero_stats(model, 1e-12), 0.0);

      const auto before = model.block(l).w_out.data();
      const auto after = out.model.block(l).w_out.data();
      const std::size_t d = h.size(), f = k.size();
      double worst = 0.0;
      for (std::size_t o = 0; o < d; ++o) {
        double inc = 0.0;
        for (std::size_t j = 0; j < f; ++j) inc += k[j] * (after[j * d + o] - before[j * d + o]);
        worst = std::max(worst, std::abs(inc - (t.z[o] - h[o])));
      }
      CHECK(worst < 1e-6);
      const auto h_new = hidden_at(out.model, s.tokens, pos, l);
      CHECK(max_rel_error(h_new, t.z) < 1e-6);
    }
  }

  SUBCASE("conflicting edits on one key get the least-squares compromise") {
    auto cfg = tiny_config(12, 2, 4);
    cfg.n_heads = 1;
    cfg.d_mlp = 4;
    Transformer toy(cfg, 9);
    randomize(toy, 10);
    const std::vector<int> tokens = {1, 2, 3, 4};
    const std::size_t pos = 3;
    const auto h = hidden_at(toy, tokens, pos, 1);
    const auto k = key_at(toy, tokens, pos, 1);
    ResidualTarget a, b;
    for (auto* t : {&a, &b}) {
      t->id = "c";
      t->tokens = tokens;
      t->position = pos;
      t->layer = 1;
      t->z = h;
    }
    const std::vector<double> ra = {1.0, -0.5, 0.25, 2.0}, rb = {-1.0, 0.5, 0.75, 0.0};
    for (std::size_t j = 0; j < 4; ++j) {
      a.z[j] += ra[j];
      b.z[j] += rb[j];
    }
    CovarianceStats stats = zero_stats(toy, 0.05);
    std::vector<double> c(16);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) c[i * 4 + j] = (i == j ? 0.5 : 0.1);
    stats.c[1] = c;
    std::vector<ResidualTarget> ts = {a, b};
    const auto out = spread_update(toy, ts, {1, 1}, stats, 2.0);

    // Normal equations: (w C + K K^T + lambda I) dW = K R^T with K = [k k].
    std::vector<double> A(16), rhs(16);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        A[i * 4 + j] = 2.0 * c[i * 4 + j] + 2.0 * k[i] * k[j] + (i == j ? 0.05 : 0.0);
        rhs[i * 4 + j] = k[i] * (ra[j] + rb[j]);
      }
    const auto dw = solve(A, rhs, 4, 4);
    const auto before = toy.block(1).w_out.data();
    const auto after = out.model.block(1).w_out.data();
    double worst = 0.0, resid_a = 0.0, resid_b = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < 16; ++i) worst = std::max(worst, std::abs((after[i] - before[i]) - dw[i]));
    CHECK(worst < 1e-9);
    for (std::size_t o = 0; o < 4; ++o) {
      double inc = 0.0;
      for (std::size_t j = 0; j < 4; ++j) inc += k[j] * dw[j * 4 + o];
      resid_a += (inc - ra[o]) * (inc - ra[o]);
      resid_b += (inc - rb[o]) * (inc - rb[o]);
      na += ra[o] * ra[o];
      nb += rb[o] * rb[o];
    }
    CHECK(std::sqrt(resid_a) + std::sqrt(resid_b) <= std::sqrt(na) + std::sqrt(nb));
  }

  SUBCASE("a failed solve leaves the model byte-identical") {
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "True", "False"};
    const auto bytes = checkpoint_bytes(model, vocab);
    CovarianceStats stats = zero_stats(model, 1e-2);
    const auto f = static_cast<std::size_t>(stats.dim);
    for (auto& [l, c] : stats.c)
      for (std::size_t i = 0; i < f; ++i) c[i * f + i] = -1e6;
    ResidualTarget t;
    t.id = s.id;
    t.tokens = s.tokens;
    t.position = 2;
    t.layer = 2;
    t.z = hidden_at(model, s.tokens, 2, 2);
    t.z[0] += 1.0;
    std::vector<ResidualTarget> ts = {t};
    CHECK_THROWS_AS(spread_update(model, ts, {1, 2}, stats), EditError);
    CHECK(checkpoint_bytes(model, vocab) == bytes);
  }

  SUBCASE("windows and targets must agree") {
    ResidualTarget t;
    t.id = s.id;
    t.tokens = s.tokens;
    t.position = 2;
    t.layer = 2;
    t.z = hidden_at(model, s.tokens, 2, 2);
    std::vector<ResidualTarget> ts = {t};
    CHECK_THROWS_AS(spread_update(model, ts, {1, 3}, zero_stats(model, 1e-2)), ContractError);
    CHECK_THROWS_AS(spread_update(model, ts, {0, 2}, zero_stats(model, 1e-2)), ContractError);
    CovarianceStats partial = zero_stats(model, 1e-2);
    partial.c.erase(1);
    CHECK_THROWS_AS(spread_update(model, ts, {1, 2}, partial), ContractError);
  }
}

TEST_CASE("applying edit batches") {
  const auto model = random_model(8);
  std::vector<SvoStatement> data;
  for (int i = 0; i < 6; ++i)
    data.push_back(statement("a" + std::to_string(i), {i, (i + 3) % 10, 2, 7, (i + 5) % 10, 9 - i}, Label::True));
  const std::vector<int> layers = {1, 2, 3};
  const auto stats = estimate_covariance(model, data, layers, 1e-2);
  EditConfig cfg;
  cfg.token = Role::object;
  cfg.layers = {1, 2};
  cfg.lr = 0.5;
  cfg.cutoff = 0.9;

  std::vector<EditRequest> wrong, right;
  for (const auto& s : data) {
    const auto pre = model.predict(s.tokens, kIds);
    wrong.push_back({s, flip(pre.label), cfg});
    right.push_back({s, pre.label, cfg});
  }

  SUBCASE("nothing to fix leaves the model unchanged") {
    const auto out = apply_edits(model, right, kIds, stats);
    CHECK(out.records.empty());
    CHECK(out.n_filtered == right.size());
    CHECK(out.model.same_weights(model));
  }
  SUBCASE("layers outside the model are rejected before any work") {
    auto bad = wrong;
    for (auto& r : bad) r.config.layers = {2, 4};
    CHECK_THROWS_AS(apply_edits(model, bad, kIds, stats), ContractError);
  }
  SUBCASE("mixed configs are rejected") {
    auto mixed = wrong;
    mixed[1].config.lr = 0.25;
    CHECK_THROWS_AS(apply_edits(model, mixed, kIds, stats), ContractError);
    CHECK_THROWS_AS(apply_edits(model, std::span<const EditRequest>{}, kIds, stats), ContractError);
  }
  SUBCASE("records, caching, and the report file") {
    ResidualCache cache;
    const auto a = apply_edits(model, wrong, kIds, stats, &cache, kernels::Exec::serial);
    CHECK(a.records.size() == wrong.size());
    CHECK(cache.size() == wrong.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      const auto post = a.model.predict(wrong[i].statement.tokens, kIds);
      CHECK(a.records[i].success == (post.label == wrong[i].target));
      CHECK(a.records[i].post_p_true == post.p_true);
      CHECK(a.records[i].pre_p_true == model.predict(wrong[i].statement.tokens, kIds).p_true);
    }
    const auto b = apply_edits(model, wrong, kIds, stats, &cache, kernels::Exec::parallel);
    CHECK(b.model.same_weights(a.model));

    const auto path = std::filesystem::temp_directory_path() / "plaus_edit_report.jsonl";
    save_edit_report(path, a.records);
    const auto back = load_edit_report(path);
    REQUIRE(back.size() == a.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].id == a.records[i].id);
      CHECK(back[i].token == Role::object);
      CHECK(back[i].layers == cfg.layers);
      CHECK(back[i].steps == a.records[i].steps);
      CHECK(back[i].stop == a.records[i].stop);
      CHECK(back[i].pre_p_true == a.records[i].pre_p_true);
      CHECK(back[i].post_p_true == a.records[i].post_p_true);
      CHECK(back[i].success == a.records[i].success);
    }
    std::filesystem::remove(path);
  }
}
