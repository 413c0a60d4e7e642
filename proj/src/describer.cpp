#include "sightline/describer.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include <fmt/format.h>

#include "sightline/error.hpp"

namespace sightline {

namespace {

struct PluralEntry {
  std::string_view singular;
  std::string_view plural;
};

constexpr std::array<PluralEntry, 7> kIrregular = {{
    {"woman", "women"},
    {"man", "men"},
    {"person", "people"},
    {"child", "children"},
    {"mouse", "mice"},
    {"foot", "feet"},
    {"sheep", "sheep"},
}};

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string direction_phrase(Direction d, const PhraseTemplates& t) {
  switch (d) {
    case Direction::Left: return t.left;
    case Direction::Right: return t.right;
    case Direction::Center: return t.center;
  }
  return t.center;
}

std::string motion_phrase(const ObjectGroup& g, const PhraseTemplates& t) {
  switch (g.heading) {
    case Heading::Toward: return t.toward;
    case Heading::Away: return t.away;
    case Heading::Static: return t.static_phrase + " " + direction_phrase(g.direction, t);
    case Heading::Unknown: return direction_phrase(g.direction, t);
  }
  return direction_phrase(g.direction, t);
}

std::string render_group(const ObjectGroup& g, const PhraseTemplates& t) {
  std::string members;
  for (std::size_t i = 0; i < g.members.size(); ++i) {
    const auto& m = g.members[i];
    if (i > 0) members += " and ";
    members += fmt::format("{} {}", m.count, m.count == 1 ? m.label : pluralize(m.label));
  }
  const std::string_view verb = g.total_count() == 1 ? "is" : "are";
  return fmt::format("{}, at {:.2f} meters away, {} {}", members, g.distance_m, verb, motion_phrase(g, t));
}

}  // namespace

int ObjectGroup::total_count() const {
  return std::accumulate(members.begin(), members.end(), 0, [](int acc, const LabelCount& m) { return acc + m.count; });
}

std::string pluralize(std::string_view label) {
  for (const auto& e : kIrregular) {
    if (label == e.singular) return std::string(e.plural);
  }
  if (ends_with(label, "s") || ends_with(label, "x") || ends_with(label, "ch") || ends_with(label, "sh")) {
    return std::string(label) + "es";
  }
  return std::string(label) + "s";
}

std::vector<ObjectGroup> group_and_prioritize(std::span<const RangedObject> objects, const DescriberConfig& cfg) {
  std::vector<const RangedObject*> order;
  order.reserve(objects.size());
  for (const auto& o : objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const RangedObject* a, const RangedObject* b) {
    if (a->distance_m != b->distance_m) return a->distance_m < b->distance_m;
    return a->detection.label < b->detection.label;
  });

  struct Building {
    ObjectGroup group;
    std::vector<std::size_t> first_seen;  // member insertion order
  };
  std::vector<Building> building;
  for (const RangedObject* o : order) {
    auto it = std::find_if(building.begin(), building.end(), [&](const Building& b) {
      return b.group.heading == o->heading && b.group.direction == o->direction &&
             o->distance_m - b.group.distance_m <= cfg.band_width_m;
    });
    if (it == building.end()) {
      building.push_back(Building{ObjectGroup{{}, o->distance_m, o->heading, o->direction}, {}});
      it = std::prev(building.end());
    }
    auto& members = it->group.members;
    auto m = std::find_if(members.begin(), members.end(),
                          [&](const LabelCount& lc) { return lc.label == o->detection.label; });
    if (m == members.end()) {
      members.push_back(LabelCount{o->detection.label, 1});
    } else {
      ++m->count;
    }
  }

  std::vector<ObjectGroup> groups;
  groups.reserve(building.size());
  for (auto& b : building) {
    // Largest tallies first; stable so ties keep nearest-first order.
    std::stable_sort(b.group.members.begin(), b.group.members.end(),
                     [](const LabelCount& x, const LabelCount& y) { return x.count > y.count; });
    groups.push_back(std::move(b.group));
  }
  if (groups.size() > cfg.max_groups) groups.resize(cfg.max_groups);
  return groups;
}

std::string render_description(std::span<const ObjectGroup> groups, const PhraseTemplates& templates) {
  if (groups.empty()) return std::string(kEmptyScene);
  std::string text;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i > 0) text += "; ";
    text += render_group(groups[i], templates);
  }
  text += '.';
  return text;
}

SceneDescription describe(std::span<const RangedObject> objects, const DescriberConfig& cfg) {
  SceneDescription scene;
  scene.groups_reported = group_and_prioritize(objects, cfg);
  scene.text = render_description(scene.groups_reported, cfg.templates);
  return scene;
}

PhraseTemplates templates_from_json(const nlohmann::json& j, PhraseTemplates base) {
  if (!j.is_object()) throw Error(Errc::SchemaViolation, "templates must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw Error(Errc::SchemaViolation, fmt::format("template '{}' must be a string", key));
    std::string* slot = key == "toward"   ? &base.toward
                        : key == "away"   ? &base.away
                        : key == "static" ? &base.static_phrase
                        : key == "left"   ? &base.left
                        : key == "right"  ? &base.right
                        : key == "center" ? &base.center
                                          : nullptr;
    if (!slot) throw Error(Errc::SchemaViolation, fmt::format("unknown template key '{}'", key));
    *slot = value.get<std::string>();
  }
  return base;
}

}  // namespace sightline
