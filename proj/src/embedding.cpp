#include "nercp/embedding.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "nercp/error.hpp"

namespace nercp {

namespace {

nlohmann::json to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector from_json(const nlohmann::json& arr, int dim) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != dim) throw InputError("embedding vector has the wrong dimension");
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

void EmbeddingTable::add(const std::string& token, Vector v) {
  if (v.size() != dim) throw InputError("embedding for '" + token + "' has the wrong dimension");
  if (!v.allFinite()) throw InputError("embedding for '" + token + "' is not finite");
  vectors[token] = std::move(v);
}

EmbeddedSentence lookup_embed(const Sentence& sentence, const EmbeddingTable& table) {
  if (sentence.tokens.empty()) throw InputError("empty sentence");
  EmbeddedSentence x{Matrix(sentence.length(), table.dim)};
  for (int j = 0; j < sentence.length(); ++j) {
    auto it = table.vectors.find(sentence.tokens[static_cast<std::size_t>(j)]);
    x.vectors.row(j) = it == table.vectors.end() ? table.oov.transpose() : it->second.transpose();
  }
  return x;
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  nlohmann::json j;
  j["dim"] = table.dim;
  j["oov"] = to_json(table.oov);
  nlohmann::json vecs = nlohmann::json::object();
  for (const auto& [token, v] : table.vectors) vecs[token] = to_json(v);
  j["vectors"] = std::move(vecs);
  out << j.dump() << '\n';
}

EmbeddingTable read_embeddings(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
    EmbeddingTable table(j.at("dim").get<int>());
    if (table.dim < 1) throw InputError("embedding dimension must be positive");
    table.oov = from_json(j.at("oov"), table.dim);
    for (const auto& [token, v] : j.at("vectors").items()) table.add(token, from_json(v, table.dim));
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed embedding file: ") + e.what());
  }
}

}  // namespace nercp
