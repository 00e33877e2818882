#pragma once

#include <stdexcept>

// Error taxonomy shared by the solvers and the command-line runner.
//
//  * std::invalid_argument  -> unusable input or configuration (exit code 2)
//  * BudgetExceeded         -> predicted work/memory above a limit (exit 3)
//  * NumericalFailure       -> non-finite or diverging numerics (exit 4)

namespace szsdg {

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace szsdg
