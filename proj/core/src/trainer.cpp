#include "progrow/trainer.hpp"

#include <cmath>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

bool same_tensor_layout(const Params& a, const Params& b) {
  std::vector<std::pair<std::string, Shape>> la, lb;
  a.for_each([&](const std::string& n, const Tensor& t) { la.emplace_back(n, t.shape()); });
  b.for_each([&](const std::string& n, const Tensor& t) { lb.emplace_back(n, t.shape()); });
  return la == lb;
}

}  // namespace

const char* to_string(CheckpointPhase phase) {
  switch (phase) {
    case CheckpointPhase::kInit:
      return "init";
    case CheckpointPhase::kPreGrowth:
      return "pre_growth";
    case CheckpointPhase::kPostGrowth:
      return "post_growth";
    case CheckpointPhase::kFinal:
      return "final";
  }
  return "?";
}

CheckpointPhase parse_checkpoint_phase(std::string_view text) {
  for (auto p : {CheckpointPhase::kInit, CheckpointPhase::kPreGrowth, CheckpointPhase::kPostGrowth,
                 CheckpointPhase::kFinal}) {
    if (text == to_string(p)) return p;
  }
  throw InputError("unknown checkpoint phase '" + std::string(text) + "'");
}

Corpus training_corpus(const DataConfig& data) {
  Rng rng = Rng(data.seed).fork("corpus");
  return gen_corpus(data, rng);
}

Corpus heldout_corpus(const DataConfig& data) {
  Rng rng = Rng(data.seed).fork("heldout");
  return gen_corpus(data, rng, data.heldout_size);
}

TrainState run_schedule(const Schedule& schedule, const TrainOptions& options, std::uint64_t seed,
                        TrainingSink* sink) {
  options.optimizer.validate();
  const auto stages = resolve_schedule(schedule);

  const Rng root(seed);
  Rng init_rng = root.fork("init");
  Rng dropout_rng = root.fork("dropout");

  TrainState state;
  state.model = schedule.initial_model;
  state.data = schedule.initial_data;
  state.params = init_params(state.model, init_rng);

  const Corpus corpus = training_corpus(state.data);
  BatchStream stream(corpus, root.fork("batches"));

  const auto snapshot = [&](const std::string& label, CheckpointPhase phase) {
    state.phase = phase;
    state.rng["batches.order"] = stream.order_state();
    state.rng["batches.mask"] = stream.mask_state();
    state.rng["dropout"] = dropout_rng.state();
    if (sink) sink->on_checkpoint(label, state);
  };

  snapshot("init", CheckpointPhase::kInit);
  OptimizerState opt = make_optimizer_state(state.params);

  for (const auto& stage : stages) {
    state.stage_index = stage.index;
    if (stage.index > 0) {
      const std::string tag = "stage" + std::to_string(stage.index);
      state.boundary_ops = stage.ops;
      snapshot(tag + "_pre", CheckpointPhase::kPreGrowth);
      GrowthState grown = apply_growth(stage.ops, {state.model, state.params, state.data});
      const bool keep_moments =
          options.optimizer.carry_moments && same_tensor_layout(grown.params, state.params);
      state.model = std::move(grown.model);
      state.params = std::move(grown.params);
      state.data = std::move(grown.data);
      if (!keep_moments) opt = make_optimizer_state(state.params);
      audit_optimizer_state(opt, state.params);
      snapshot(tag + "_post", CheckpointPhase::kPostGrowth);
      state.boundary_ops.clear();
    }

    const std::size_t warmup = stage_warmup(stage.steps, options.optimizer.warmup);
    for (std::uint64_t s = 0; s < stage.steps; ++s) {
      const MlmBatch batch = stream.make_batch(stage.batch_size, state.data);
      LossAndGrads lg = mlm_loss(batch, state.params, state.model, dropout_rng, true);
      if (options.optimizer.grad_clip > 0.0) clip_gradients(lg.grads, options.optimizer.grad_clip);
      const double lr = lr_at(s, stage.steps, warmup, options.optimizer.peak_lr);
      optimizer_step(state.params, lg.grads, opt, lr, options.optimizer);
      ++state.global_step;
      const bool last = s + 1 == stage.steps;
      if (sink && (last || (options.log_interval > 0 && (s + 1) % options.log_interval == 0))) {
        sink->on_log({state.global_step, stage.index, lr, lg.loss});
      }
    }
  }
  snapshot("final", CheckpointPhase::kFinal);
  return state;
}

ContinuityReport loss_continuity_check(const TrainState& pre, const TrainState& post,
                                       const MlmBatch& probe, double tol) {
  if (pre.phase != CheckpointPhase::kPreGrowth || post.phase != CheckpointPhase::kPostGrowth) {
    throw InputError(std::string("loss_continuity_check: expected pre_growth/post_growth pair, got ") +
                     to_string(pre.phase) + "/" + to_string(post.phase));
  }
  if (pre.stage_index != post.stage_index || pre.global_step != post.global_step) {
    throw InputError("loss_continuity_check: checkpoints come from different boundaries (stage " +
                     std::to_string(pre.stage_index) + " step " +
                     std::to_string(pre.global_step) + " vs stage " +
                     std::to_string(post.stage_index) + " step " +
                     std::to_string(post.global_step) + ")");
  }
  ContinuityReport report;
  report.loss_pre = mlm_eval_loss(probe, pre.params, pre.model);
  report.loss_post = mlm_eval_loss(probe, post.params, post.model);
  report.diff = std::abs(report.loss_post - report.loss_pre);
  const auto& ops = pre.boundary_ops;
  report.preservation_class = std::all_of(ops.begin(), ops.end(), is_function_preserving);
  if (report.preservation_class) report.pass = report.diff <= tol;
  return report;
}

}  // namespace progrow
