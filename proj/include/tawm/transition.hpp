#pragma once

#include <cstdint>
#include <vector>

namespace tawm {

// One experience tuple (o_t, a_t, o_{t+dt}, r_t, dt) plus episode bookkeeping.
struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  std::vector<double> next_obs;
  double reward = 0.0;
  double dt = 0.0;
  std::uint64_t episode = 0;
  std::uint64_t step = 0;
};

}  // namespace tawm
