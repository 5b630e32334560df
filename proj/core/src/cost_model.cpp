#include "progrow/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include "progrow/errors.hpp"

namespace progrow {
namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.layers == b.layers && a.dim == b.dim && a.hidden == b.hidden && a.heads == b.heads &&
         a.max_len == b.max_len && a.vocab == b.vocab && a.ffn == b.ffn && a.pool_k == b.pool_k;
}

std::string with_commas(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  const std::size_t lead = digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (i % 3) == lead) out += ',';
    out += digits[i];
  }
  return out;
}

}  // namespace

std::uint64_t ffn_mult_adds(std::uint64_t n, std::uint64_t d, std::uint64_t h_eff) {
  return 2 * n * d * h_eff;
}

std::uint64_t ffn_mult_adds(std::uint64_t n, std::uint64_t d, std::uint64_t h,
                            const FfnMode& mode) {
  switch (mode.kind) {
    case FfnKind::kFull:
      return ffn_mult_adds(n, d, h);
    case FfnKind::kShared:
      return ffn_mult_adds(n, d, h / mode.factor);
    case FfnKind::kFactorized:
      return 2 * n * mode.factor * (d + h);
  }
  return 0;
}

std::uint64_t attn_mult_adds(std::uint64_t n_q, std::uint64_t n_kv, std::uint64_t d) {
  return 2 * n_kv * d * d + 2 * n_q * d * d + 2 * n_q * n_kv * d;
}

StepCost model_mult_adds_per_step(const ModelConfig& config, std::uint64_t train_len,
                                  std::uint64_t masks_per_seq, bool count_overhead,
                                  std::uint64_t batch_size) {
  const std::uint64_t d = config.dim, h = config.hidden;
  const std::uint64_t n = train_len;
  const std::uint64_t pooled = ceil_div(n, config.pool_k);
  StepCost cost;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::uint64_t n_kv = l == 0 ? n : pooled;
    cost.layers += attn_mult_adds(pooled, n_kv, d) + ffn_mult_adds(pooled, d, h, config.ffn);
  }
  if (count_overhead) cost.overhead = 2 * masks_per_seq * d * config.vocab;
  cost.per_sequence = cost.layers + cost.overhead;
  cost.batch_size = batch_size;
  cost.per_batch = cost.per_sequence * batch_size;
  return cost;
}

CostReport schedule_cost(const Schedule& schedule, const Schedule& baseline,
                         const CostOptions& options) {
  const auto stages = resolve_schedule(schedule);
  const auto base_stages = resolve_schedule(baseline);
  if (!same_architecture(stages.back().model, base_stages.back().model)) {
    throw ValidationError("schedule_cost: schedule ends at " +
                          describe_model(stages.back().model) + " but baseline ends at " +
                          describe_model(base_stages.back().model));
  }
  const auto cost_of = [&](const ResolvedStage& s) {
    StageCost c;
    c.index = s.index;
    c.steps = s.steps;
    c.model_summary = describe_model(s.model);
    c.train_len = s.data.train_len;
    c.masks_per_seq = s.data.masks_per_seq;
    c.step = model_mult_adds_per_step(s.model, s.data.train_len, s.data.masks_per_seq,
                                      options.count_overhead, s.batch_size);
    c.params = param_count(s.model).total;
    c.total = c.steps * c.step.per_sequence;
    return c;
  };

  CostReport report;
  report.flops_x2 = options.flops_x2;
  for (const auto& s : stages) {
    report.stages.push_back(cost_of(s));
    report.total += report.stages.back().total;
  }
  for (const auto& s : base_stages) report.baseline_total += cost_of(s).total;
  report.speedup =
      static_cast<double>(report.baseline_total) / static_cast<double>(report.total) - 1.0;
  return report;
}

std::string format_cost_table(const CostReport& report, bool with_baseline) {
  const std::uint64_t mult = report.flops_x2 ? 2 : 1;
  const char* unit = report.flops_x2 ? "FLOPs" : "Mult-Adds";
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-5s %9s %-44s %5s %5s %22s %24s %12s\n", "stage", "steps",
                "model", "len", "masks", "per-step", "stage total", "params");
  out << "# unit: " << unit << " per training sequence (forward pass)\n" << line;
  for (const auto& s : report.stages) {
    std::snprintf(line, sizeof line, "%-5zu %9llu %-44s %5llu %5llu %22s %24s %12s\n", s.index,
                  static_cast<unsigned long long>(s.steps), s.model_summary.c_str(),
                  static_cast<unsigned long long>(s.train_len),
                  static_cast<unsigned long long>(s.masks_per_seq),
                  with_commas(s.step.per_sequence * mult).c_str(),
                  with_commas(s.total * mult).c_str(), with_commas(s.params).c_str());
    out << line;
  }
  out << "total: " << with_commas(report.total * mult) << '\n';
  if (with_baseline) {
    std::snprintf(line, sizeof line, "baseline total: %s\nspeedup: %+.1f%%\n",
                  with_commas(report.baseline_total * mult).c_str(), report.speedup * 100.0);
    out << line;
  }
  return out.str();
}

}  // namespace progrow
