#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "nercp/corpus.hpp"
#include "nercp/crf.hpp"

namespace nercp {

// Fixed token vectors. Unknown tokens map to `oov` (zeros unless set).
struct EmbeddingTable {
  int dim = 0;
  std::map<std::string, Vector> vectors;
  Vector oov;

  explicit EmbeddingTable(int d = 0) : dim(d), oov(Vector::Zero(d)) {}
  void add(const std::string& token, Vector v);
};

EmbeddedSentence lookup_embed(const Sentence& sentence, const EmbeddingTable& table);

void write_embeddings(const EmbeddingTable& table, std::ostream& out);
EmbeddingTable read_embeddings(std::istream& in);

}  // namespace nercp
