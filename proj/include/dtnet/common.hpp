#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace dtnet {

/// Flat model parameters. Length is fixed within one experiment.
using ParamVector = std::vector<double>;

/// Identity string of the form "node-" + 16 hex chars (or a scenario label).
using NodeId = std::string;

/// Virtual time. The simulator never consults the wall clock.
using SimDuration = std::chrono::milliseconds;
using SimTime = std::chrono::milliseconds;

inline constexpr SimTime seconds(std::int64_t s) { return SimTime{s * 1000}; }

inline double to_seconds(SimTime t) { return static_cast<double>(t.count()) / 1000.0; }

}  // namespace dtnet
