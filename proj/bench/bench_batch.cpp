// Serial vs OpenMP throughput of top-K decoding and the forward algorithm.
#include <chrono>
#include <cstdio>
#include <random>

#include <CLI11.hpp>

#include "nercp/batch.hpp"

using namespace nercp;

namespace {

template <typename Fn>
double seconds(Fn&& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch kernel benchmark"};
  int sentences = 2000, k = 100, dim = 16, min_len = 5, max_len = 40, repeats = 3;
  std::uint64_t seed = 1;
  app.add_option("--sentences", sentences, "Sentences per batch")->capture_default_str();
  app.add_option("--k", k, "Decoding depth")->capture_default_str();
  app.add_option("--dim", dim, "Embedding dimension")->capture_default_str();
  app.add_option("--min-length", min_len, "Shortest sentence")->capture_default_str();
  app.add_option("--max-length", max_len, "Longest sentence")->capture_default_str();
  app.add_option("--repeats", repeats, "Timed repetitions")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabelScheme scheme({"PER", "LOC", "ORG", "MISC"});
  CrfParams params(scheme, dim);
  for (int i = 0; i < scheme.size(); ++i) {
    for (int j = 0; j < dim; ++j) params.emission()(i, j) = normal(rng);
    for (int j = 0; j < scheme.size(); ++j)
      if (params.allowed(i, j)) params.set_transition(i, j, normal(rng));
  }
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::vector<EmbeddedSentence> batch;
  for (int s = 0; s < sentences; ++s) {
    Matrix x(len(rng), dim);
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < dim; ++c) x(r, c) = normal(rng);
    batch.push_back({std::move(x)});
  }

  std::printf("threads=%d sentences=%d k=%d dim=%d\n", batch_threads(), sentences, k, dim);
  bool same = true;
  const double dser = seconds([&] { decode_batch_serial(params, batch, k); }, repeats);
  const double dpar = seconds([&] { decode_batch(params, batch, k); }, repeats);
  const auto a = decode_batch_serial(params, batch, k);
  const auto b = decode_batch(params, batch, k);
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].fingerprint() == b[i].fingerprint();
  std::printf("decode     serial %.3fs  parallel %.3fs  speedup %.2fx\n", dser, dpar, dser / dpar);

  const double zser = seconds([&] { log_partition_batch_serial(params, batch); }, repeats);
  const double zpar = seconds([&] { log_partition_batch(params, batch); }, repeats);
  same = same && log_partition_batch_serial(params, batch) == log_partition_batch(params, batch);
  std::printf("partition  serial %.3fs  parallel %.3fs  speedup %.2fx\n", zser, zpar, zser / zpar);
  std::printf("results identical: %s\n", same ? "yes" : "no");
  return same ? 0 : 1;
}
