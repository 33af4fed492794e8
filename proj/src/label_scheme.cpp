#include "nercp/label_scheme.hpp"

#include <set>

#include "nercp/error.hpp"

namespace nercp {

LabelScheme::LabelScheme(std::vector<std::string> classes) : classes_(std::move(classes)) {
  std::set<std::string> seen;
  for (const auto& name : classes_) {
    if (name.empty()) throw InputError("entity class names must be nonempty");
    if (name == "O" || name == "START" || name == "STOP") {
      throw InputError("entity class name '" + name + "' is reserved");
    }
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw InputError("entity class name '" + name + "' contains whitespace");
    }
    if (!seen.insert(name).second) throw InputError("duplicate entity class '" + name + "'");
  }
}

std::optional<int> LabelScheme::find_class(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string LabelScheme::name(LabelId label) const {
  if (label == outside()) return "O";
  if (label == start()) return "START";
  if (label == stop()) return "STOP";
  if (is_begin(label)) return "B-" + class_name(class_of(label));
  if (is_inside(label)) return "I-" + class_name(class_of(label));
  throw InputError("label id " + std::to_string(label) + " outside the scheme");
}

std::optional<LabelId> LabelScheme::parse(std::string_view text) const {
  if (text == "O") return outside();
  if (text == "START") return start();
  if (text == "STOP") return stop();
  if (text.size() < 3 || text[1] != '-') return std::nullopt;
  auto cls = find_class(text.substr(2));
  if (!cls) return std::nullopt;
  if (text[0] == 'B') return begin_of(*cls);
  if (text[0] == 'I') return inside_of(*cls);
  return std::nullopt;
}

bool LabelScheme::allowed(LabelId from, LabelId to) const {
  if (from < 0 || from >= size() || to < 0 || to >= size()) return false;
  if (to == start() || from == stop()) return false;
  if (from == start() && to == stop()) return false;
  if (is_inside(to)) {
    return (is_begin(from) || is_inside(from)) && class_of(from) == class_of(to);
  }
  return true;
}

bool LabelScheme::is_valid_sequence(const LabelSequence& labels) const {
  if (labels.empty()) return false;
  LabelId prev = start();
  for (LabelId label : labels) {
    if (!is_emitting(label) || !allowed(prev, label)) return false;
    prev = label;
  }
  return allowed(prev, stop());
}

}  // namespace nercp
