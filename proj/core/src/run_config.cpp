#include "progrow/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "progrow/errors.hpp"

namespace progrow {
namespace {

using detail::fail_at;
using detail::json;

// BERT-base dimensions; schedules follow the 1M-step experimental setup.
constexpr const char* kStackBase = R"({
  "model": {"L": 3, "D": 768, "H": 3072, "M": 12, "N_max": 512, "V": 30522,
            "dropout": 0.1, "attn_scale": true, "ffn": "full", "pool_k": 1},
  "data": {"seed": 1, "corpus_size": 4096, "seq_len_full": 512, "train_len": 512, "masks": 76},
  "schedule": [
    {"steps": 300000, "batch": 256},
    {"steps": 400000, "ops": "stack:6", "batch": 256},
    {"steps": 300000, "ops": "stack:12", "batch": 256}
  ],
  "optimizer": {"peak_lr": 1e-4, "warmup": 10000, "betas": [0.9, 0.999], "eps": 1e-6, "wd": 0.01},
  "cost": {"count_overhead": true, "flops_x2": false}
})";

constexpr const char* kCompoundBase = R"({
  "model": {"L": 3, "D": 768, "H": 3072, "M": 12, "N_max": 512, "V": 30522,
            "dropout": 0.1, "attn_scale": true, "ffn": "shared:2", "pool_k": 2},
  "data": {"seed": 1, "corpus_size": 4096, "seq_len_full": 512, "train_len": 512, "masks": 76},
  "schedule": [
    {"steps": 200000, "batch": 256},
    {"steps": 200000, "ops": "stack:6", "batch": 256},
    {"steps": 300000, "ops": "stack:12", "batch": 256},
    {"steps": 300000, "ops": "unshare,unpool", "batch": 256}
  ],
  "optimizer": {"peak_lr": 1e-4, "warmup": 10000, "betas": [0.9, 0.999], "eps": 1e-6, "wd": 0.01},
  "cost": {"count_overhead": true, "flops_x2": false}
})";

// Desk scale: L=4, D=32, H=64, M=2, N_max=128, V=64 and 2000 steps split
// in the same proportions as the BERT-base schedules.
constexpr const char* kStackBaseDesk = R"({
  "model": {"L": 1, "D": 32, "H": 64, "M": 2, "N_max": 128, "V": 64,
            "dropout": 0.1, "attn_scale": true, "ffn": "full", "pool_k": 1},
  "data": {"seed": 1, "corpus_size": 2048, "heldout_size": 128, "seq_len_full": 128,
           "train_len": 128, "masks": 19, "markov_order": 1},
  "schedule": [
    {"steps": 600, "batch": 16},
    {"steps": 800, "ops": "stack:2", "batch": 16},
    {"steps": 600, "ops": "stack:4", "batch": 16}
  ],
  "optimizer": {"peak_lr": 2e-3, "warmup": 50, "betas": [0.9, 0.999], "eps": 1e-6, "wd": 0.01},
  "cost": {"count_overhead": true, "flops_x2": false},
  "train": {"seed": 7, "log_interval": 20}
})";

constexpr const char* kCompoundBaseDesk = R"({
  "model": {"L": 1, "D": 32, "H": 64, "M": 2, "N_max": 128, "V": 64,
            "dropout": 0.1, "attn_scale": true, "ffn": "shared:2", "pool_k": 2},
  "data": {"seed": 1, "corpus_size": 2048, "heldout_size": 128, "seq_len_full": 128,
           "train_len": 128, "masks": 19, "markov_order": 1},
  "schedule": [
    {"steps": 400, "batch": 16},
    {"steps": 400, "ops": "stack:2", "batch": 16},
    {"steps": 600, "ops": "stack:4", "batch": 16},
    {"steps": 600, "ops": "unshare,unpool", "batch": 16}
  ],
  "optimizer": {"peak_lr": 2e-3, "warmup": 50, "betas": [0.9, 0.999], "eps": 1e-6, "wd": 0.01},
  "cost": {"count_overhead": true, "flops_x2": false},
  "train": {"seed": 7, "log_interval": 20}
})";

struct Preset {
  const char* name;
  const char* document;
};
constexpr Preset kPresets[] = {{"stack_base", kStackBase},
                               {"compound_base", kCompoundBase},
                               {"stack_base_desk", kStackBaseDesk},
                               {"compound_base_desk", kCompoundBaseDesk}};

Stage stage_from_json(const json& j, const std::string& path) {
  detail::require_object(j, path);
  detail::reject_unknown(j, path, {"steps", "ops", "train_len", "masks", "batch"});
  Stage s;
  s.steps = detail::get_uint(j, path, "steps", 0, true, 1);
  const std::string ops = detail::get_string(j, path, "ops", "");
  try {
    s.ops = parse_growth_ops(ops);
  } catch (const UsageError& e) {
    fail_at(detail::join(path, "ops"), e.what());
  }
  if (j.contains("train_len")) s.train_len = detail::get_uint(j, path, "train_len", 0, true, 1);
  if (j.contains("masks")) s.masks_per_seq = detail::get_uint(j, path, "masks", 0, true);
  s.batch_size = detail::get_uint(j, path, "batch", s.batch_size, false, 1);
  return s;
}

OptimizerConfig optimizer_from_json(const json& j, const std::string& path) {
  detail::require_object(j, path);
  detail::reject_unknown(j, path,
                         {"peak_lr", "warmup", "betas", "eps", "wd", "grad_clip", "carry_moments"});
  OptimizerConfig o;
  o.peak_lr = detail::get_real(j, path, "peak_lr", o.peak_lr);
  o.warmup = detail::get_uint(j, path, "warmup", o.warmup);
  if (const auto it = j.find("betas"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
      fail_at(detail::join(path, "betas"), "expected [beta1, beta2]");
    }
    o.beta1 = (*it)[0].get<double>();
    o.beta2 = (*it)[1].get<double>();
  }
  o.eps = detail::get_real(j, path, "eps", o.eps);
  o.weight_decay = detail::get_real(j, path, "wd", o.weight_decay);
  o.grad_clip = detail::get_real(j, path, "grad_clip", o.grad_clip);
  o.carry_moments = detail::get_bool(j, path, "carry_moments", o.carry_moments);
  o.validate();
  return o;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  detail::require_object(doc, "config");
  detail::reject_unknown(doc, "", {"model", "data", "schedule", "optimizer", "cost", "train"});
  if (!doc.contains("model")) fail_at("model", "missing required section");
  if (!doc.contains("schedule")) fail_at("schedule", "missing required section");

  RunConfig rc;
  rc.schedule.initial_model = detail::model_from_json(doc["model"], "model");
  rc.schedule.initial_data = detail::data_from_json(doc.value("data", json::object()), "data",
                                                    rc.schedule.initial_model.vocab);
  const json& stages = doc["schedule"];
  if (!stages.is_array() || stages.empty()) fail_at("schedule", "expected a non-empty array");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    rc.schedule.stages.push_back(stage_from_json(stages[i], "schedule[" + std::to_string(i) + "]"));
  }
  if (doc.contains("optimizer")) rc.optimizer = optimizer_from_json(doc["optimizer"], "optimizer");
  if (doc.contains("cost")) {
    const json& c = detail::require_object(doc["cost"], "cost");
    detail::reject_unknown(c, "cost", {"count_overhead", "flops_x2"});
    rc.cost.count_overhead = detail::get_bool(c, "cost", "count_overhead", true);
    rc.cost.flops_x2 = detail::get_bool(c, "cost", "flops_x2", false);
  }
  if (doc.contains("train")) {
    const json& t = detail::require_object(doc["train"], "train");
    detail::reject_unknown(t, "train", {"seed", "log_interval"});
    rc.seed = detail::get_uint(t, "train", "seed", rc.seed);
    rc.log_interval = detail::get_uint(t, "train", "log_interval", rc.log_interval, false, 1);
  }
  // Composition errors carry "schedule[i]" paths.
  resolve_schedule(rc.schedule);
  return rc;
}

RunConfig load_run_config(const std::string& source) {
  constexpr std::string_view kPrefix = "preset:";
  if (source.rfind(kPrefix, 0) == 0) return parse_run_config(preset_document(source.substr(kPrefix.size())));
  std::ifstream in(source);
  if (!in) throw ValidationError("config: cannot read '" + source + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

std::string preset_document(std::string_view name) {
  for (const auto& p : kPresets) {
    if (name == p.name) return p.document;
  }
  throw ValidationError("config: unknown preset '" + std::string(name) + "'");
}

}  // namespace progrow
