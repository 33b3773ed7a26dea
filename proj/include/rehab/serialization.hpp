#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "rehab/calibration.hpp"
#include "rehab/game.hpp"
#include "rehab/skeleton.hpp"

namespace rehab {

using Json = nlohmann::ordered_json;

// Joint coordinates are stored with 4 decimals. Frames that go through the
// engine are quantized first so a recorded frame is exactly what was played.
SkeletonFrame quantized(const SkeletonFrame& frame);

// {"t":..,"kind":"frame","joints":{"spine_base":[x,y,z],...}[,"conf":[...]]}
std::string frame_to_line(const SkeletonFrame& frame);
// Throws MalformedFrame.
SkeletonFrame frame_from_json(const Json& j);
SkeletonFrame frame_from_line(std::string_view line);

Json cell_to_json(Cell c);
Cell cell_from_json(const Json& j);

Json grid_to_json(const GridFrame& grid);
GridFrame grid_from_json(const Json& j);

Json config_to_json(const GameConfig& config);
// Missing fields take the built-in defaults; unknown fields and bad values throw InvalidConfig.
// The result is validated.
GameConfig config_from_json(const Json& j);
// Same as config_from_json but without running validate().
GameConfig config_from_json_unchecked(const Json& j);

// Event payload without the record envelope, e.g. {"type":"score_changed","new_score":3}.
Json event_to_json(const GameEventKind& kind);
GameEventKind event_from_json(const Json& j);
std::string_view event_type_name(const GameEventKind& kind);

Mechanic mechanic_from_string(std::string_view s);
ViewMode view_from_string(std::string_view s);
GridLayout layout_from_string(std::string_view s);
EndReason end_reason_from_string(std::string_view s);

}  // namespace rehab
