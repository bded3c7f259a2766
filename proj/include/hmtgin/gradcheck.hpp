#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmtgin/model.hpp"
#include "hmtgin/tasks.hpp"
#include "hmtgin/trainer.hpp"

namespace hmtgin {

struct GroupCheck {
  std::string term;       // task name, constraint name, or "total"
  std::string parameter;  // registry name
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckSummary {
  std::vector<GroupCheck> rows;
  double tolerance = 0.0;
  bool passed = true;

  const GroupCheck* worst() const;
  std::string table() const;
};

// Checks every trainable parameter group of every loss term and of the total
// loss. Dropout is off and constraint selections are frozen at the starting
// point.
GradCheckSummary run_gradcheck(const MultiRelationalGraph& g,
                               std::span<const TaskSpec> tasks,
                               const TrainConfig& cfg, double step = 1e-5,
                               double tolerance = 1e-5);

}  // namespace hmtgin
