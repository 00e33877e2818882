#pragma once

#include <json.hpp>
#include <string>

#include "szsdg/path.hpp"

// CSV and JSON round-trips for paths.  Doubles are written with enough
// digits to reproduce the exact bit pattern on parse.

namespace szsdg {

std::string format_double(double x);  // shortest round-trip decimal

std::string to_csv(const Path& p);
std::string to_csv(const CadlagPath& p);
Path path_from_csv(const std::string& text);
CadlagPath cadlag_from_csv(const std::string& text, double t_end = -1.0);

nlohmann::json to_json(const Path& p);
nlohmann::json to_json(const CadlagPath& p);
Path path_from_json(const nlohmann::json& j);
CadlagPath cadlag_from_json(const nlohmann::json& j);

}  // namespace szsdg
