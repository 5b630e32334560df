#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "progrow/encoder.hpp"
#include "progrow/growth.hpp"
#include "progrow/mlm_data.hpp"
#include "progrow/optimizer.hpp"
#include "progrow/schedule.hpp"

namespace progrow {

enum class CheckpointPhase { kInit, kPreGrowth, kPostGrowth, kFinal };
const char* to_string(CheckpointPhase phase);
CheckpointPhase parse_checkpoint_phase(std::string_view text);

// Everything a checkpoint records.
struct TrainState {
  ModelConfig model;
  DataConfig data;
  Params params;
  std::size_t stage_index = 0;
  std::uint64_t global_step = 0;
  CheckpointPhase phase = CheckpointPhase::kInit;
  std::vector<GrowthOp> boundary_ops;   // ops applied at this stage boundary
  std::map<std::string, RngState> rng;  // named streams, e.g. "dropout"
};

struct LossRecord {
  std::uint64_t step = 0;  // global step, 1-based after the update
  std::size_t stage = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// Receives immutable snapshots from run_schedule.
class TrainingSink {
 public:
  virtual ~TrainingSink() = default;
  virtual void on_log(const LossRecord&) {}
  // Labels: "init", "stage<i>_pre", "stage<i>_post", "final".
  virtual void on_checkpoint(const std::string& /*label*/, const TrainState&) {}
};

struct TrainOptions {
  OptimizerConfig optimizer;
  std::size_t log_interval = 10;  // the last step of every stage is always logged
};

// Stage loop: apply growth, reset optimizer moments (unless carried across a
// shape-preserving boundary) and the LR schedule, then train. Randomness
// derives from `seed`: "init" for weights, "batches" for sampling/masking,
// "dropout" for dropout. The corpus comes from the data config's own seed.
TrainState run_schedule(const Schedule& schedule, const TrainOptions& options, std::uint64_t seed,
                        TrainingSink* sink = nullptr);

// Training corpus and held-out corpus for a data config.
Corpus training_corpus(const DataConfig& data);
Corpus heldout_corpus(const DataConfig& data);

struct ContinuityReport {
  double loss_pre = 0.0;
  double loss_post = 0.0;
  double diff = 0.0;                // |loss_post - loss_pre|
  bool preservation_class = false;  // all boundary ops preserve the function
  std::optional<bool> pass;         // set only for preservation-class boundaries
};

// Compares probe-batch loss (dropout off) on the two sides of one growth
// boundary. Throws InputError when the checkpoints are not the pre/post pair
// of the same boundary.
ContinuityReport loss_continuity_check(const TrainState& pre, const TrainState& post,
                                       const MlmBatch& probe, double tol = 1e-9);

}  // namespace progrow
