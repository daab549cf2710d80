#include "moderoute/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "json.hpp"
#include "moderoute/error.hpp"

namespace moderoute {

void PricingTable::validate() const {
  if (!(input_price_per_1k >= 0.0) || !(output_price_per_1k >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "token prices must be nonnegative");
}

TokenCounts count_tokens(const Trajectory& t, const PricingTable& pricing, std::size_t prompt_tokens) {
  TokenCounts c{prompt_tokens, 0};
  for (const auto& tok : t.tokens()) {
    switch (tok.origin) {
      case Origin::ModelGenerated: ++c.output; break;
      case Origin::InjectedPrefix: ++c.input; break;
      case Origin::Observation: ++(pricing.observations_as_input ? c.input : c.output); break;
    }
  }
  return c;
}

double token_cost(const TokenCounts& counts, const PricingTable& pricing) {
  return static_cast<double>(counts.input) / 1000.0 * pricing.input_price_per_1k +
         static_cast<double>(counts.output) / 1000.0 * pricing.output_price_per_1k;
}

double trajectory_cost(const Trajectory& t, const PricingTable& pricing, std::size_t prompt_tokens) {
  return token_cost(count_tokens(t, pricing, prompt_tokens), pricing);
}

double cost_of_pass(double total_cost, double accuracy) {
  if (!(accuracy > 0.0)) throw Error(ErrorCode::ZeroAccuracy, "cost-of-pass is undefined at zero accuracy");
  return total_cost / accuracy;
}

namespace {

void add(ModeCost& into, const EvalRecord& r, std::size_t& correct) {
  ++into.queries;
  into.input_tokens += r.tokens.input;
  into.output_tokens += r.tokens.output;
  into.dollar_cost += r.cost;
  if (r.correct) ++correct;
}

void finish(ModeCost& m, std::size_t correct) {
  if (m.queries == 0) return;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.queries);
  if (m.accuracy > 0.0) m.cost_of_pass = cost_of_pass(m.dollar_cost / static_cast<double>(m.queries), m.accuracy);
}

nlohmann::json to_json(const ModeCost& m) {
  nlohmann::json j = {{"queries", m.queries},         {"input_tokens", m.input_tokens},
                      {"output_tokens", m.output_tokens}, {"dollar_cost", m.dollar_cost},
                      {"accuracy", m.accuracy}};
  if (m.cost_of_pass) {
    j["cost_of_pass"] = *m.cost_of_pass;
  } else {
    j["cost_of_pass"] = "inf";
  }
  return j;
}

std::string csv_row(std::string_view name, const ModeCost& m) {
  return fmt::format("{},{},{},{},{:.17g},{:.17g},{}\n", name, m.queries, m.input_tokens, m.output_tokens,
                     m.dollar_cost, m.accuracy, m.cost_of_pass ? fmt::format("{:.17g}", *m.cost_of_pass) : "inf");
}

}  // namespace

CostReport cost_report(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyResult, "no evaluation records");
  CostReport rep;
  std::array<std::size_t, kModeCount> correct{};
  std::size_t all_correct = 0;
  for (const auto& r : records) {
    add(rep.per_mode[index_of(r.mode)], r, correct[index_of(r.mode)]);
    add(rep.overall, r, all_correct);
  }
  for (std::size_t m = 0; m < kModeCount; ++m) {
    finish(rep.per_mode[m], correct[m]);
    rep.allocation[m] = static_cast<double>(rep.per_mode[m].queries) / static_cast<double>(records.size());
  }
  finish(rep.overall, all_correct);
  rep.non_instant_ratio = 1.0 - rep.allocation[index_of(Mode::Instant)];
  return rep;
}

std::string cost_report_json(const CostReport& report) {
  nlohmann::json modes = nlohmann::json::object();
  nlohmann::json allocation = nlohmann::json::object();
  for (Mode m : kModes) {
    modes[std::string(mode_name(m))] = to_json(report.per_mode[index_of(m)]);
    allocation[std::string(mode_name(m))] = report.allocation[index_of(m)];
  }
  nlohmann::json j = {{"modes", modes},
                      {"overall", to_json(report.overall)},
                      {"allocation", allocation},
                      {"non_instant_ratio", report.non_instant_ratio}};
  return j.dump(2) + "\n";
}

std::string cost_report_csv(const CostReport& report) {
  std::string out = "mode,queries,input_tokens,output_tokens,dollar_cost,accuracy,cost_of_pass\n";
  for (Mode m : kModes) out += csv_row(mode_name(m), report.per_mode[index_of(m)]);
  out += csv_row("overall", report.overall);
  return out;
}

std::vector<BandAllocation> allocation_by_difficulty(std::span<const EvalRecord> records, std::size_t bands) {
  if (bands == 0) throw Error(ErrorCode::InvalidConfig, "at least one difficulty band is required");
  std::vector<BandAllocation> out(bands);
  std::vector<std::array<std::size_t, kModeCount>> counts(bands);
  std::vector<std::size_t> correct(bands, 0);
  for (std::size_t b = 0; b < bands; ++b) {
    out[b].lower = static_cast<double>(b) / static_cast<double>(bands);
    out[b].upper = static_cast<double>(b + 1) / static_cast<double>(bands);
  }
  for (const auto& r : records) {
    auto b = static_cast<std::size_t>(std::clamp(r.difficulty, 0.0, 1.0) * static_cast<double>(bands));
    b = std::min(b, bands - 1);
    ++out[b].count;
    ++counts[b][index_of(r.mode)];
    if (r.correct) ++correct[b];
  }
  for (std::size_t b = 0; b < bands; ++b) {
    if (out[b].count == 0) continue;
    const auto n = static_cast<double>(out[b].count);
    for (std::size_t m = 0; m < kModeCount; ++m) out[b].fractions[m] = static_cast<double>(counts[b][m]) / n;
    out[b].accuracy = static_cast<double>(correct[b]) / n;
  }
  return out;
}

}  // namespace moderoute
