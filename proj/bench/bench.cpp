// Serial vs OpenMP timings for the dense kernels and for causal tracing.
// Each pair is also checked for bit-identical output.
//
//   plaus_bench [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/label.hpp"
#include "plaus/model/transformer.hpp"
#include "plaus/numeric/kernels.hpp"
#include "plaus/tracing/trace.hpp"

using namespace plaus;
using kernels::Exec;

namespace {

template <class F>
double best_seconds(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* what, double serial, double parallel, bool same) {
  std::printf("%-28s serial %9.4f s  parallel %9.4f s  speedup %5.2fx  %s\n", what, serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

void bench_gemm(int repeats) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t d : {64, 128, 256, 384}) {
    std::vector<double> a(d * d), b(d * d), cs(d * d), cp(d * d);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const double s = best_seconds(repeats, [&] { kernels::gemm_nn_serial(a, b, cs, d, d, d, false); });
    const double p = best_seconds(repeats, [&] { kernels::gemm_nn_parallel(a, b, cp, d, d, d, false); });
    char name[64];
    std::snprintf(name, sizeof name, "gemm_nn %zux%zux%zu", d, d, d);
    row(name, s, p, cs == cp);
  }
}

void bench_tracing(int repeats) {
  TransformerConfig cfg;
  cfg.vocab_size = 40;
  cfg.n_layers = 6;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_mlp = 128;
  cfg.max_seq = 16;
  const Transformer model(cfg, 3);
  const LabelIds ids{38, 39};

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> tok(0, 37);
  std::vector<SvoStatement> statements;
  for (int k = 0; k < 8; ++k) {
    SvoStatement s;
    s.id = "b" + std::to_string(k);
    s.subject = {1, 3};
    s.verb = {3, 4};
    s.object = {5, 7};
    for (int i = 0; i < 7; ++i) s.tokens.push_back(tok(rng));
    s.label = Label::True;
    statements.push_back(s);
  }
  auto run = [&](Exec e, std::vector<double>& sink) {
    TraceOptions o;
    o.require_correct = false;
    o.exec = e;
    sink.clear();
    for (const auto& s : statements) {
      const auto r = trace_statement(model, s, ids, {Role::subject, 0.5, 11}, o);
      for (const auto& [site, g] : r.ie)
        for (const auto& rowv : g) sink.insert(sink.end(), rowv.begin(), rowv.end());
    }
  };
  std::vector<double> out_s, out_p;
  const double s = best_seconds(repeats, [&] { run(Exec::serial, out_s); });
  const double p = best_seconds(repeats, [&] { run(Exec::parallel, out_p); });
  row("trace 8 statements, 3 sites", s, p, out_s == out_p);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
  std::printf("OpenMP threads: %d, best of %d\n", kernels::max_threads(), repeats);
  bench_gemm(repeats);
  bench_tracing(repeats);
}
