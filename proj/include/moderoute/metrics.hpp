#pragma once

// Dollar cost of trajectories, cost-of-pass and mode allocation summaries.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moderoute/trajectory.hpp"

namespace moderoute {

struct PricingTable {
  double input_price_per_1k = 0.00028;
  double output_price_per_1k = 0.00084;
  /// Tool responses are read by the model, so they bill as input by default.
  bool observations_as_input = true;

  /// Throws InvalidConfig for negative prices.
  void validate() const;
};

struct TokenCounts {
  std::size_t input = 0;
  std::size_t output = 0;
};

/// Prompt tokens and injected prefixes are input, model tokens output;
/// observations follow pricing.observations_as_input.
TokenCounts count_tokens(const Trajectory& t, const PricingTable& pricing, std::size_t prompt_tokens = 0);

double token_cost(const TokenCounts& counts, const PricingTable& pricing);
double trajectory_cost(const Trajectory& t, const PricingTable& pricing, std::size_t prompt_tokens = 0);

/// cost / accuracy. Throws ZeroAccuracy unless accuracy > 0.
double cost_of_pass(double total_cost, double accuracy);

/// One answered query of an evaluation run.
struct EvalRecord {
  std::string query_id;
  Mode mode = Mode::Instant;
  double difficulty = 0.0;
  bool correct = false;
  TokenCounts tokens;
  double cost = 0.0;
};

struct ModeCost {
  std::size_t queries = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double dollar_cost = 0.0;  // summed over queries
  double accuracy = 0.0;
  std::optional<double> cost_of_pass;  // empty when accuracy is 0; per query
};

struct CostReport {
  std::array<ModeCost, kModeCount> per_mode{};
  ModeCost overall;
  std::array<double, kModeCount> allocation{};
  double non_instant_ratio = 0.0;
};

/// Throws EmptyResult for no records.
CostReport cost_report(std::span<const EvalRecord> records);

std::string cost_report_json(const CostReport& report);
std::string cost_report_csv(const CostReport& report);

struct BandAllocation {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::array<double, kModeCount> fractions{};  // zeros for an empty band
  double accuracy = 0.0;
};

inline constexpr std::size_t kDefaultDifficultyBands = 5;

/// Equal-width bands on [0, 1]; difficulty 1 falls in the last band.
std::vector<BandAllocation> allocation_by_difficulty(std::span<const EvalRecord> records,
                                                     std::size_t bands = kDefaultDifficultyBands);

}  // namespace moderoute
