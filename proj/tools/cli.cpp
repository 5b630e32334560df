#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "progrow/checkpoint.hpp"
#include "progrow/cost_model.hpp"
#include "progrow/errors.hpp"
#include "progrow/growth.hpp"
#include "progrow/run_config.hpp"
#include "progrow/trainer.hpp"

namespace progrow::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kProbeSeed = 0x5eed;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

json report_json(const CostReport& report, bool with_baseline) {
  const std::uint64_t mult = report.flops_x2 ? 2 : 1;
  json stages = json::array();
  for (const auto& s : report.stages) {
    stages.push_back({{"index", s.index},
                      {"steps", s.steps},
                      {"model", s.model_summary},
                      {"train_len", s.train_len},
                      {"masks", s.masks_per_seq},
                      {"per_step_layers", s.step.layers * mult},
                      {"per_step_overhead", s.step.overhead * mult},
                      {"per_step", s.step.per_sequence * mult},
                      {"batch_size", s.step.batch_size},
                      {"per_batch", s.step.per_batch * mult},
                      {"params", s.params},
                      {"total", s.total * mult}});
  }
  json doc{{"unit", report.flops_x2 ? "flops" : "mult_adds"},
           {"stages", stages},
           {"total", report.total * mult}};
  if (with_baseline) {
    doc["baseline_total"] = report.baseline_total * mult;
    doc["speedup"] = report.speedup;
  }
  return doc;
}

void apply_cost_overrides(CostOptions& cost, const std::string& overhead, bool flops) {
  if (overhead == "on") cost.count_overhead = true;
  if (overhead == "off") cost.count_overhead = false;
  if (flops) cost.flops_x2 = true;
}

// Appends one CSV row per log record and saves every checkpoint under
// <dir>/checkpoints/<label>.
class DirectorySink : public TrainingSink {
 public:
  DirectorySink(const fs::path& dir, std::ostream& out) : dir_(dir), out_(out) {
    fs::create_directories(dir_);
    csv_.open(dir_ / "loss.csv", std::ios::trunc);
    if (!csv_) throw Error("cannot write " + (dir_ / "loss.csv").string());
    csv_ << "step,stage,lr,loss\n";
  }

  void on_log(const LossRecord& r) override {
    char line[160];
    std::snprintf(line, sizeof line, "%llu,%zu,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step), r.stage, r.lr, r.loss);
    csv_ << line;
    csv_.flush();
  }

  void on_checkpoint(const std::string& label, const TrainState& state) override {
    save_checkpoint(dir_ / "checkpoints" / label, state);
    out_ << "checkpoint " << label << ": step " << state.global_step << ", "
         << describe_model(state.model) << '\n';
  }

 private:
  fs::path dir_;
  std::ostream& out_;
  std::ofstream csv_;
};

MlmBatch probe_for(const DataConfig& data, std::size_t count) {
  return probe_batch(heldout_corpus(data), data, count, kProbeSeed);
}

int cmd_plan(const std::string& config_path, bool as_json, const std::string& overhead,
             bool flops, bool with_baseline, std::ostream& out) {
  RunConfig rc = load_run_config(config_path);
  apply_cost_overrides(rc.cost, overhead, flops);
  const CostReport report = schedule_cost(rc.schedule, baseline_schedule(rc.schedule), rc.cost);
  if (as_json) {
    out << report_json(report, with_baseline).dump(2) << '\n';
  } else {
    out << format_cost_table(report, with_baseline);
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, const fs::path& dir,
              std::optional<std::uint64_t> seed, bool init_only, std::ostream& out) {
  RunConfig rc = load_run_config(config_path);
  const std::uint64_t run_seed = seed.value_or(rc.seed);
  if (init_only) {
    Rng init_rng = Rng(run_seed).fork("init");
    TrainState state;
    state.model = rc.schedule.initial_model;
    state.data = rc.schedule.initial_data;
    state.params = init_params(state.model, init_rng);
    save_checkpoint(dir / "checkpoints" / "init", state);
    out << "checkpoint init: " << describe_model(state.model) << '\n';
    return kExitOk;
  }
  TrainOptions options{rc.optimizer, rc.log_interval};
  DirectorySink sink(dir, out);
  const TrainState final_state = run_schedule(rc.schedule, options, run_seed, &sink);
  const double loss = mlm_eval_loss(probe_for(final_state.data, final_state.data.heldout_size),
                                    final_state.params, final_state.model);
  out << "held-out loss: " << fmt("%.6f", loss) << '\n';
  return kExitOk;
}

int cmd_grow(const fs::path& ckpt, const std::string& op_spec, const fs::path& out_dir,
             std::ostream& out) {
  const auto ops = parse_growth_ops(op_spec);
  TrainState state = load_checkpoint(ckpt);
  GrowthState grown = apply_growth(ops, {state.model, state.params, state.data});
  state.model = std::move(grown.model);
  state.params = std::move(grown.params);
  state.data = std::move(grown.data);
  state.phase = CheckpointPhase::kPostGrowth;
  state.boundary_ops = ops;
  save_checkpoint(out_dir, state);
  out << "grew to " << describe_model(state.model) << " (train_len " << state.data.train_len
      << ", masks " << state.data.masks_per_seq << ")\n";
  return kExitOk;
}

int cmd_verify(const fs::path& ckpt, const std::string& op_spec, double tol, std::size_t batch,
               bool as_json, std::ostream& out) {
  const auto ops = parse_growth_ops(op_spec);
  const TrainState state = load_checkpoint(ckpt);
  const auto report =
      verify_function_preserving(state.params, state.model, ops, probe_for(state.data, batch), tol);
  const char* verdict = !report.preservation_class ? "report-only" : report.pass ? "pass" : "fail";
  if (as_json) {
    out << json{{"ops", op_spec},
                {"max_abs_diff", report.max_abs_diff},
                {"preservation_class", report.preservation_class},
                {"tol", tol},
                {"result", verdict}}
               .dump(2)
        << '\n';
  } else {
    out << "ops: " << op_spec << '\n'
        << "max_abs_diff: " << fmt("%.3e", report.max_abs_diff) << '\n'
        << "class: " << (report.preservation_class ? "function-preserving" : "report-only") << '\n'
        << "result: " << verdict << '\n';
  }
  return report.pass ? kExitOk : kExitFailure;
}

int cmd_eval(const fs::path& ckpt, const std::string& config_path, bool as_json,
             std::ostream& out) {
  const RunConfig rc = load_run_config(config_path);
  const TrainState state = load_checkpoint(ckpt);
  DataConfig data = resolve_schedule(rc.schedule).back().data;
  if (data.train_len > state.model.max_len) {
    throw ValidationError("eval: config train_len " + std::to_string(data.train_len) +
                          " exceeds checkpoint N_max=" + std::to_string(state.model.max_len));
  }
  const double loss =
      mlm_eval_loss(probe_for(data, data.heldout_size), state.params, state.model);
  if (as_json) {
    out << json{{"heldout_loss", loss}, {"sequences", data.heldout_size}}.dump(2) << '\n';
  } else {
    out << "held-out loss: " << fmt("%.6f", loss) << " over " << data.heldout_size
        << " sequences\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive compound growth for Transformer MLMs", "progrow"};
  app.require_subcommand(1);

  std::string config, ckpt, op_spec, out_dir, overhead = "config";
  bool as_json = false, flops = false, init_only = false;
  std::optional<std::uint64_t> seed;
  double tol = 1e-9;
  std::size_t batch = 4;
  const auto overhead_check = CLI::IsMember({"config", "on", "off"});

  auto* plan = app.add_subcommand("plan", "Cost report of a schedule vs its single-stage baseline");
  plan->add_option("-c,--config", config, "Config file or preset:<name>")->required();
  plan->add_flag("--json", as_json, "Machine-readable output");
  plan->add_option("--overhead", overhead, "Count MLM-head cost: config|on|off")
      ->check(overhead_check);
  plan->add_flag("--flops", flops, "Report FLOPs (2 x Mult-Adds)");

  auto* train = app.add_subcommand("train", "Run the staged training schedule");
  train->add_option("-c,--config", config, "Config file or preset:<name>")->required();
  train->add_option("-o,--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Run seed (overrides train.seed)");
  train->add_flag("--init-only", init_only, "Write only the initialized checkpoint");

  auto* grow = app.add_subcommand("grow", "Apply growth ops to a checkpoint");
  grow->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  grow->add_option("--op", op_spec, "Growth ops, e.g. stack:24,unshare")->required();
  grow->add_option("-o,--out", out_dir, "Output checkpoint directory")->required();

  auto* verify = app.add_subcommand("verify", "Check function preservation of growth ops");
  verify->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  verify->add_option("--op", op_spec, "Growth ops")->required();
  verify->add_option("--tol", tol, "Max abs output difference")->check(CLI::PositiveNumber);
  verify->add_option("--batch", batch, "Probe sequences")->check(CLI::PositiveNumber);
  verify->add_flag("--json", as_json, "Machine-readable output");

  auto* flops_cmd = app.add_subcommand("flops", "Per-stage cost table");
  flops_cmd->add_option("-c,--config", config, "Config file or preset:<name>")->required();
  flops_cmd->add_flag("--json", as_json, "Machine-readable output");
  flops_cmd->add_option("--overhead", overhead, "Count MLM-head cost: config|on|off")
      ->check(overhead_check);
  flops_cmd->add_flag("--flops", flops, "Report FLOPs (2 x Mult-Adds)");

  auto* eval = app.add_subcommand("eval", "Held-out MLM loss of a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  eval->add_option("-c,--config", config, "Config file or preset:<name>")->required();
  eval->add_flag("--json", as_json, "Machine-readable output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kExitOk;
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*plan) return cmd_plan(config, as_json, overhead, flops, true, out);
    if (*flops_cmd) return cmd_plan(config, as_json, overhead, flops, false, out);
    if (*train) return cmd_train(config, out_dir, seed, init_only, out);
    if (*grow) return cmd_grow(ckpt, op_spec, out_dir, out);
    if (*verify) return cmd_verify(ckpt, op_spec, tol, batch, as_json, out);
    if (*eval) return cmd_eval(ckpt, config, as_json, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace progrow::cli
