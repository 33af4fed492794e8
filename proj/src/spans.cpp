#include "nercp/spans.hpp"

#include "nercp/error.hpp"

namespace nercp {

std::optional<int> span_class(const LabelScheme& scheme, const LabelSequence& y, int a, int b) {
  const int t = static_cast<int>(y.size());
  if (a < 1 || b < 0 || a + b > t) throw InputError("span outside the sentence");
  const LabelId first = y[static_cast<std::size_t>(a - 1)];
  if (!scheme.is_begin(first)) return std::nullopt;
  const int cls = scheme.class_of(first);
  const LabelId inside = scheme.inside_of(cls);
  for (int j = a + 1; j <= a + b; ++j) {
    if (y[static_cast<std::size_t>(j - 1)] != inside) return std::nullopt;
  }
  if (a + b < t && y[static_cast<std::size_t>(a + b)] == inside) return std::nullopt;
  return cls;
}

std::vector<EntitySpan> extract_entities(const LabelScheme& scheme, const LabelSequence& y) {
  std::vector<EntitySpan> out;
  const int t = static_cast<int>(y.size());
  for (int j = 1; j <= t; ++j) {
    const LabelId l = y[static_cast<std::size_t>(j - 1)];
    if (!scheme.is_begin(l)) continue;
    const int cls = scheme.class_of(l);
    int end = j;
    while (end < t && y[static_cast<std::size_t>(end)] == scheme.inside_of(cls)) ++end;
    out.push_back({j, end - j, cls});
  }
  return out;
}

}  // namespace nercp
