#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "progrow/growth.hpp"
#include "progrow/mlm_data.hpp"
#include "progrow/model.hpp"

namespace progrow {

// A contiguous run of optimizer steps at one architecture, entered by
// applying `ops` (empty for the first stage).
struct Stage {
  std::uint64_t steps = 0;
  std::vector<GrowthOp> ops;
  // When set, must equal the data settings reached after `ops`.
  std::optional<std::size_t> train_len;
  std::optional<std::size_t> masks_per_seq;
  std::size_t batch_size = 16;
};

struct Schedule {
  ModelConfig initial_model;
  DataConfig initial_data;
  std::vector<Stage> stages;
  // When set, the composed ops must land exactly on this config.
  std::optional<ModelConfig> final_model;
};

// A stage with the configs it trains at.
struct ResolvedStage {
  std::size_t index = 0;
  std::uint64_t steps = 0;
  std::size_t batch_size = 0;
  std::vector<GrowthOp> ops;
  ModelConfig model;
  DataConfig data;
};

// Composes the ops stage by stage and checks every invariant, throwing
// ValidationError with a "schedule[i]..." path on the first failure.
std::vector<ResolvedStage> resolve_schedule(const Schedule& schedule);

// Single stage of the same total step count at the schedule's final model
// and data settings.
Schedule baseline_schedule(const Schedule& schedule);

}  // namespace progrow
