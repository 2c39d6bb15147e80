#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "gmegnn/balance.hpp"
#include "gmegnn/errors.hpp"

namespace gmegnn {

enum class ExposureMapping {
  own_treatment,
  any_treated_neighbor,
  joint_four_level,
  // Extension point: level = number of thresholds the treated-neighbor
  // count reaches.
  neighbor_count_thresholds,
};

struct ExposureAssignment {
  std::vector<int> levels;
  int K = 2;
  ExposureMapping mapping = ExposureMapping::any_treated_neighbor;

  std::size_t count(int level) const {
    return static_cast<std::size_t>(std::count(levels.begin(), levels.end(), level));
  }
};

struct ExposureSpec {
  ExposureMapping mapping = ExposureMapping::any_treated_neighbor;
  std::vector<int> thresholds;  // neighbor_count_thresholds only, strictly increasing, >= 1
};

inline std::vector<int> treated_neighbor_counts(const GroupData& group) {
  std::vector<int> c(group.size(), 0);
  for (NodeId i = 0; i < group.size(); ++i) {
    for (NodeId j : group.graph.neighbors(i)) c[i] += group.W[j];
  }
  return c;
}

inline ExposureAssignment own_treatment(const GroupData& group) {
  return {group.W, 2, ExposureMapping::own_treatment};
}

// T_i = 1{at least one treated neighbor}.
inline ExposureAssignment any_treated_neighbor(const GroupData& group) {
  auto c = treated_neighbor_counts(group);
  for (auto& v : c) v = v >= 1 ? 1 : 0;
  return {std::move(c), 2, ExposureMapping::any_treated_neighbor};
}

// T_i = 2*W_i + 1{any treated neighbor}:
//   0 control, no treated neighbor    1 control, treated neighbor
//   2 treated, no treated neighbor    3 treated, treated neighbor
inline ExposureAssignment joint_four_level(const GroupData& group) {
  auto c = treated_neighbor_counts(group);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 2 * group.W[i] + (c[i] >= 1 ? 1 : 0);
  return {std::move(c), 4, ExposureMapping::joint_four_level};
}

inline ExposureAssignment neighbor_count_thresholds(const GroupData& group,
                                                    const std::vector<int>& thresholds) {
  if (thresholds.empty()) throw ParameterError("threshold exposure needs at least one threshold");
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (thresholds[k] < 1 || (k > 0 && thresholds[k] <= thresholds[k - 1])) {
      throw ParameterError("exposure thresholds must be strictly increasing and >= 1");
    }
  }
  auto c = treated_neighbor_counts(group);
  for (auto& v : c) {
    v = static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), v) -
                         thresholds.begin());
  }
  return {std::move(c), static_cast<int>(thresholds.size()) + 1,
          ExposureMapping::neighbor_count_thresholds};
}

inline ExposureAssignment assign_exposure(const GroupData& group, const ExposureSpec& spec) {
  switch (spec.mapping) {
    case ExposureMapping::own_treatment: return own_treatment(group);
    case ExposureMapping::any_treated_neighbor: return any_treated_neighbor(group);
    case ExposureMapping::joint_four_level: return joint_four_level(group);
    case ExposureMapping::neighbor_count_thresholds:
      return neighbor_count_thresholds(group, spec.thresholds);
  }
  throw ParameterError("unknown exposure mapping");
}

inline int exposure_levels(const ExposureSpec& spec) {
  switch (spec.mapping) {
    case ExposureMapping::joint_four_level: return 4;
    case ExposureMapping::neighbor_count_thresholds:
      return static_cast<int>(spec.thresholds.size()) + 1;
    default: return 2;
  }
}

inline ExposureMapping parse_exposure_mapping(std::string_view name) {
  if (name == "any-neighbor") return ExposureMapping::any_treated_neighbor;
  if (name == "joint4") return ExposureMapping::joint_four_level;
  if (name == "own") return ExposureMapping::own_treatment;
  if (name == "thresholds") return ExposureMapping::neighbor_count_thresholds;
  throw ParameterError("unknown exposure mapping '" + std::string(name) +
                       "' (expected any-neighbor, joint4, own or thresholds)");
}

inline std::string to_string(ExposureMapping m) {
  switch (m) {
    case ExposureMapping::own_treatment: return "own";
    case ExposureMapping::any_treated_neighbor: return "any-neighbor";
    case ExposureMapping::joint_four_level: return "joint4";
    case ExposureMapping::neighbor_count_thresholds: return "thresholds";
  }
  return "?";
}

}  // namespace gmegnn
