#include "nercp/checkpoint.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "nercp/error.hpp"

namespace nercp {

namespace {
constexpr int kVersion = 1;
}

void write_checkpoint(const CrfParams& params, std::ostream& out) {
  const int n = params.num_labels();
  nlohmann::json j;
  j["format"] = "nercp-crf";
  j["version"] = kVersion;
  j["classes"] = params.scheme().classes();
  j["dim"] = params.dim();
  nlohmann::json em = nlohmann::json::array();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < params.dim(); ++c) em.push_back(params.emission()(r, c));
  }
  nlohmann::json tr = nlohmann::json::array();
  nlohmann::json mask = nlohmann::json::array();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const bool ok = params.allowed(r, c);
      tr.push_back(ok ? nlohmann::json(params.transition(r, c)) : nlohmann::json(nullptr));
      mask.push_back(ok ? 1 : 0);
    }
  }
  j["emission"] = std::move(em);
  j["transition"] = std::move(tr);
  j["mask"] = std::move(mask);
  out << j.dump() << '\n';
}

CrfParams read_checkpoint(std::istream& in) {
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format").get<std::string>() != "nercp-crf") throw InputError("not a CRF checkpoint");
    if (j.at("version").get<int>() != kVersion) throw InputError("unsupported checkpoint version");
    LabelScheme scheme(j.at("classes").get<std::vector<std::string>>());
    const int d = j.at("dim").get<int>();
    const int n = scheme.size();
    const auto& em = j.at("emission");
    const auto& tr = j.at("transition");
    const auto& mk = j.at("mask");
    if (d < 1 || em.size() != static_cast<std::size_t>(n * d) || tr.size() != static_cast<std::size_t>(n * n) ||
        mk.size() != static_cast<std::size_t>(n * n)) {
      throw InputError("checkpoint arrays have inconsistent sizes");
    }
    Matrix emission(n, d);
    for (int i = 0; i < n * d; ++i) emission(i / d, i % d) = em[static_cast<std::size_t>(i)].get<double>();
    Matrix transition = Matrix::Zero(n, n);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n * n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      mask[k] = mk[k].get<int>() != 0 ? 1 : 0;
      if (mask[k]) {
        if (tr[k].is_null()) throw InputError("allowed transition stored as null");
        transition(i / n, i % n) = tr[k].get<double>();
      }
    }
    return CrfParams(std::move(scheme), std::move(emission), std::move(transition), std::move(mask));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace nercp
