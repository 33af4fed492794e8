#include "nercp/batch.hpp"

#include <exception>

#ifdef NERCP_HAVE_OPENMP
#include <omp.h>
#endif

namespace nercp {

namespace {

template <typename Out, typename Fn>
std::vector<Out> parallel_map(std::size_t n, Fn fn) {
  std::vector<Out> out(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long long i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = fn(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

std::vector<TopKDecoding> decode_batch(const CrfParams& params, const std::vector<EmbeddedSentence>& batch, int k) {
  return parallel_map<TopKDecoding>(batch.size(), [&](std::size_t i) { return beam_search_topk(params, batch[i], k); });
}

std::vector<TopKDecoding> decode_batch_serial(const CrfParams& params, const std::vector<EmbeddedSentence>& batch, int k) {
  std::vector<TopKDecoding> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(beam_search_topk(params, x, k));
  return out;
}

std::vector<double> log_partition_batch(const CrfParams& params, const std::vector<EmbeddedSentence>& batch) {
  return parallel_map<double>(batch.size(), [&](std::size_t i) { return log_partition(params, batch[i]); });
}

std::vector<double> log_partition_batch_serial(const CrfParams& params, const std::vector<EmbeddedSentence>& batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(log_partition(params, x));
  return out;
}

int batch_threads() {
#ifdef NERCP_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace nercp
