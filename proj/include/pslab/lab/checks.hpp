#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace pslab::lab {

struct CheckReport {
  std::string name;
  bool passed = false;
  nlohmann::json details;
};

nlohmann::json to_json(const CheckReport& report);

/// shift_factor(16, 2) == 2 exactly and |shift_factor(768, 1) - 6.9282| <= 0.005.
CheckReport check_shift();

/// Ambient oracle vs decomposition for (h, l) in {(8,2), (16,2), (64,8)}, 64 atoms,
/// `trials` random states each; passes when every max relative error <= tolerance.
CheckReport check_decomposition(std::uint64_t seed = 0, int trials = 1000, double tolerance = 1e-8);

/// Reverse-mode gradients of `count` random networks and losses against
/// fourth-order central differences; passes when every relative error <= tolerance.
CheckReport check_gradient_suite(std::uint64_t seed = 0, int count = 20, double tolerance = 1e-4);

}  // namespace pslab::lab
