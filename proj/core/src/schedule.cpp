#include "progrow/schedule.hpp"

#include <string>

#include "progrow/errors.hpp"

namespace progrow {

std::vector<ResolvedStage> resolve_schedule(const Schedule& schedule) {
  if (schedule.stages.empty()) throw ValidationError("schedule: needs at least one stage");
  schedule.initial_model.validate();
  schedule.initial_data.validate();
  if (schedule.initial_data.vocab != schedule.initial_model.vocab) {
    throw ValidationError("data.V: vocabulary " + std::to_string(schedule.initial_data.vocab) +
                          " differs from model.V=" + std::to_string(schedule.initial_model.vocab));
  }
  if (schedule.initial_data.train_len > schedule.initial_model.max_len) {
    throw ValidationError("data.train_len: exceeds model.N_max=" +
                          std::to_string(schedule.initial_model.max_len));
  }

  ModelConfig model = schedule.initial_model;
  DataConfig data = schedule.initial_data;
  std::vector<ResolvedStage> resolved;
  for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
    const Stage& stage = schedule.stages[i];
    const std::string path = "schedule[" + std::to_string(i) + "]";
    if (stage.steps == 0) throw ValidationError(path + ".steps: must be at least 1");
    if (stage.batch_size == 0) throw ValidationError(path + ".batch: must be at least 1");
    if (i == 0 && !stage.ops.empty()) {
      throw ValidationError(path + ".ops: the first stage cannot apply growth ops");
    }
    try {
      apply_growth_to_config(stage.ops, model, data);
      model.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(path + ".ops: " + e.what());
    } catch (const Error& e) {
      throw ValidationError(path + ".ops: " + e.what());
    }
    if (stage.train_len && *stage.train_len != data.train_len) {
      throw ValidationError(path + ".train_len: declared " + std::to_string(*stage.train_len) +
                            " but ops reach " + std::to_string(data.train_len) +
                            " (use extend:<len>:<masks>)");
    }
    if (stage.masks_per_seq && *stage.masks_per_seq != data.masks_per_seq) {
      throw ValidationError(path + ".masks: declared " + std::to_string(*stage.masks_per_seq) +
                            " but ops reach " + std::to_string(data.masks_per_seq) +
                            " (use extend:<len>:<masks>)");
    }
    resolved.push_back({i, stage.steps, stage.batch_size, stage.ops, model, data});
  }
  if (schedule.final_model && !(*schedule.final_model == model)) {
    throw ValidationError("schedule: composed ops end at " + describe_model(model) +
                          ", declared final model is " +
                          describe_model(*schedule.final_model));
  }
  return resolved;
}

Schedule baseline_schedule(const Schedule& schedule) {
  const auto resolved = resolve_schedule(schedule);
  std::uint64_t total_steps = 0;
  for (const auto& s : resolved) total_steps += s.steps;
  Schedule baseline;
  baseline.initial_model = resolved.back().model;
  baseline.initial_data = resolved.back().data;
  Stage only;
  only.steps = total_steps;
  only.batch_size = resolved.back().batch_size;
  baseline.stages.push_back(only);
  return baseline;
}

}  // namespace progrow
