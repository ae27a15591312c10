#pragma once

#include <string_view>

#include "json.hpp"

#include "roadlayout/scene_model.hpp"

namespace roadlayout {

// JSON-value forms of the annotation object, shared by the manifest, the CLI
// and the annotation service. `context` prefixes error messages.
nlohmann::json attributes_to_json(const SceneAttributes& theta);
SceneAttributes attributes_from_json(const nlohmann::json& j, std::string_view context = {});

// Attribute schema (names, groups, ranges, gating) as served to annotators.
nlohmann::json schema_json();

}  // namespace roadlayout
