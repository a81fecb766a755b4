#pragma once

#include "snaklat/lattice.hpp"

#include <optional>
#include <string>
#include <vector>

namespace snaklat {

enum class Parameter { Mu, D };

inline std::string to_string(Parameter p) { return p == Parameter::Mu ? "mu" : "d"; }

enum class EventKind { Start, Fold, BranchPoint, End };

inline std::string to_string(EventKind k) {
    switch (k) {
    case EventKind::Start: return "start";
    case EventKind::Fold: return "fold";
    case EventKind::BranchPoint: return "branch_point";
    case EventKind::End: return "end";
    }
    return "";
}

struct BranchPoint {
    Vector u;
    double mu = 0.0;
    double d = 0.0;
    /// l2 norm of the unfolded full-square field.
    double norm = 0.0;
    std::optional<int> unstable_count;
    /// Unit tangent in (u, p) space, p being the continuation parameter.
    Vector tangent;
};

struct Event {
    std::size_t index = 0;
    EventKind kind = EventKind::Start;
};

struct Branch {
    GridSpec grid;
    Parameter parameter = Parameter::Mu;
    std::vector<BranchPoint> points;
    std::vector<Event> events;
    bool closed = false;
    std::string end_reason;
};

struct FoldPoint {
    Vector u;
    double mu = 0.0;
    double d = 0.0;
    /// Null vector of the Jacobian, unit norm in the orbit-weighted inner product.
    Vector phi;
    bool refined = false;
    /// Index of the stored branch point preceding the fold (when taken from a branch).
    std::size_t branch_index = 0;
    double residual_norm = 0.0;
    double null_residual = 0.0;
};

inline double parameter_value(const BranchPoint& p, Parameter par) { return par == Parameter::Mu ? p.mu : p.d; }

}  // namespace snaklat
