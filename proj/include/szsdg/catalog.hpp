#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "szsdg/dynamics.hpp"
#include "szsdg/path.hpp"

// Built-in game instances: named coefficient bundles with admissible control
// sets, a horizon, and the time-zero histories, constructed from a strict
// parameter block (defaults applied, unknown keys rejected).

namespace szsdg {

struct Instance {
  std::string name;
  GameCoefficients c;
  ControlSet u_set, v_set;
  double horizon = 1.0;
  Path initial;            // state history at time zero
  CadlagPath z0, w0;       // control histories at time zero
  nlohmann::json params;   // resolved parameters (defaults applied)
};

struct InstanceSchema {
  std::string name;
  std::string summary;
  nlohmann::json defaults;
};

// Parameter schemas of every built-in instance, in listing order.
const std::vector<InstanceSchema>& catalog();

// Builds the named instance.  Unknown names, unknown parameter keys, and
// out-of-range values raise std::invalid_argument naming the offender.
Instance make_instance(const std::string& name,
                       const nlohmann::json& params = nlohmann::json::object());

}  // namespace szsdg
