#pragma once

#include <compare>
#include <optional>
#include <vector>

#include "nercp/label_scheme.hpp"

namespace nercp {

// Entity covering positions a..a+b (1-based, inclusive) with class `cls`.
struct EntitySpan {
  int a = 1;
  int b = 0;
  int cls = 0;

  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

// Class of the entity spanning a..a+b in y: B-w at a, I-w through a+b, and
// the label after a+b (STOP past the end) not continuing it. nullopt when the
// positions do not form exactly one entity.
std::optional<int> span_class(const LabelScheme& scheme, const LabelSequence& y, int a, int b);

// All maximal entities of y in position order.
std::vector<EntitySpan> extract_entities(const LabelScheme& scheme, const LabelSequence& y);

}  // namespace nercp
