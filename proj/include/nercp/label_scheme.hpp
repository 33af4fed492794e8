#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nercp {

using LabelId = int;
using LabelSequence = std::vector<LabelId>;

// IOB2 label set derived from an ordered list of entity classes.
//
// Layout: 0 = O, then B-w / I-w pairs in class order (B at 1 + 2w, I at
// 2 + 2w), then START and STOP. Only the first 2c + 1 labels can appear in a
// sentence; START and STOP exist for the chain boundaries.
class LabelScheme {
 public:
  explicit LabelScheme(std::vector<std::string> classes);

  int num_classes() const { return static_cast<int>(classes_.size()); }
  int size() const { return 2 * num_classes() + 3; }
  int num_emitting() const { return 2 * num_classes() + 1; }

  LabelId outside() const { return 0; }
  LabelId begin_of(int cls) const { return 1 + 2 * cls; }
  LabelId inside_of(int cls) const { return 2 + 2 * cls; }
  LabelId start() const { return 2 * num_classes() + 1; }
  LabelId stop() const { return 2 * num_classes() + 2; }

  bool is_emitting(LabelId label) const { return label >= 0 && label < num_emitting(); }
  bool is_begin(LabelId label) const { return is_emitting(label) && label > 0 && label % 2 == 1; }
  bool is_inside(LabelId label) const { return is_emitting(label) && label > 0 && label % 2 == 0; }
  // Class index of a B-/I- label, -1 otherwise.
  int class_of(LabelId label) const { return is_begin(label) || is_inside(label) ? (label - 1) / 2 : -1; }

  const std::vector<std::string>& classes() const { return classes_; }
  const std::string& class_name(int cls) const { return classes_.at(static_cast<std::size_t>(cls)); }
  std::optional<int> find_class(std::string_view name) const;

  std::string name(LabelId label) const;
  // Parses O, B-w, I-w, START, STOP.
  std::optional<LabelId> parse(std::string_view text) const;

  // IOB2 structural mask. Forbids entering START, leaving STOP, START -> STOP,
  // and any I-w not preceded by B-w or I-w of the same class.
  bool allowed(LabelId from, LabelId to) const;

  // True when the sequence is nonempty, uses emitting labels only and every
  // transition (including START and STOP padding) is allowed.
  bool is_valid_sequence(const LabelSequence& labels) const;

  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;

 private:
  std::vector<std::string> classes_;
};

}  // namespace nercp
