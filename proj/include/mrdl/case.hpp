#pragma once

#include <cstddef>
#include <optional>

#include "mrdl/linalg.hpp"

namespace mrdl {

/// One input vector as sent to a single map task.
struct TrainingCase {
  std::size_t case_id = 0;
  Vector pixels;  // intensities in [0, 1]
  std::optional<int> label;

  friend bool operator==(const TrainingCase&, const TrainingCase&) = default;
};

}  // namespace mrdl
