#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sightline/distance.hpp"

namespace sightline {

struct LabelCount {
  std::string label;
  int count = 0;

  friend bool operator==(const LabelCount&, const LabelCount&) = default;
};

struct ObjectGroup {
  std::vector<LabelCount> members;
  double distance_m = 0;  // nearest member
  Heading heading = Heading::Unknown;
  Direction direction = Direction::Center;

  int total_count() const;
};

// Phrase strings used by render_description. Static objects get
// "<static_phrase> <direction phrase>"; Unknown heading gets the direction
// phrase alone.
struct PhraseTemplates {
  std::string toward = "headed towards you";
  std::string away = "headed away from you";
  std::string static_phrase = "standing still";
  std::string left = "to your left";
  std::string right = "to your right";
  std::string center = "ahead";
};

struct DescriberConfig {
  double band_width_m = 0.25;
  std::size_t max_groups = 3;
  PhraseTemplates templates;
};

struct SceneDescription {
  std::string text;
  std::vector<ObjectGroup> groups_reported;
};

inline constexpr std::string_view kEmptyScene = "Nothing detected nearby.";

std::string pluralize(std::string_view label);

/// Merges objects that share heading and direction and lie within
/// band_width_m of the group's nearest member, nearest groups first.
std::vector<ObjectGroup> group_and_prioritize(std::span<const RangedObject> objects, const DescriberConfig& cfg = {});

std::string render_description(std::span<const ObjectGroup> groups, const PhraseTemplates& templates = {});

SceneDescription describe(std::span<const RangedObject> objects, const DescriberConfig& cfg = {});

// Overrides any subset of the PhraseTemplates fields; unknown keys are a
// SchemaViolation.
PhraseTemplates templates_from_json(const nlohmann::json& j, PhraseTemplates base = {});

}  // namespace sightline
