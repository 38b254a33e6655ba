#pragma once

#include <stdexcept>
#include <string>

namespace cesopt {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller passed data violating a documented precondition.
struct InvalidArgument : Error {
    using Error::Error;
};

// Schedule pieces contradict each other (flow identities, variant pins).
struct InconsistentSchedule : Error {
    using Error::Error;
};

// Feeder line set is not a tree rooted at the slack bus.
struct InvalidTopology : Error {
    using Error::Error;
};

// The nonlinear power-flow fixed point failed to converge.
struct OracleDivergence : Error {
    using Error::Error;
};

// Scenario data is unusable for the requested run (bad bounds, missing CES, ...).
struct InvalidScenario : Error {
    using Error::Error;
};

// The assembled program has no feasible point; message names the clashing constraints.
struct InfeasibleProblem : Error {
    using Error::Error;
};

// The solver hit its iteration cap before reaching the requested tolerances.
struct NonConvergence : Error {
    using Error::Error;
};

// Input file missing/corrupt; message names file and row where possible.
struct LoadError : Error {
    using Error::Error;
};

// Output could not be written; message names the path.
struct EmitError : Error {
    using Error::Error;
};

} // namespace cesopt
