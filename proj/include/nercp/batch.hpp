#pragma once

#include <vector>

#include "nercp/decoding.hpp"

namespace nercp {

// Per-sentence kernels over a batch. The parallel versions split sentences
// across OpenMP threads; the serial versions are the reference they are
// tested against. Results are identical and in input order. If sentences
// fail, the error of the first failing sentence is rethrown.
std::vector<TopKDecoding> decode_batch(const CrfParams& params, const std::vector<EmbeddedSentence>& batch, int k);
std::vector<TopKDecoding> decode_batch_serial(const CrfParams& params, const std::vector<EmbeddedSentence>& batch, int k);

std::vector<double> log_partition_batch(const CrfParams& params, const std::vector<EmbeddedSentence>& batch);
std::vector<double> log_partition_batch_serial(const CrfParams& params, const std::vector<EmbeddedSentence>& batch);

int batch_threads();

}  // namespace nercp
