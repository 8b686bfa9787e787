#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "davt/core.hpp"
#include "json.hpp"

namespace davt {

// Shortest exact decimal ("%.17g"): parsing the text recovers the double bit
// for bit, which is what the reproducibility contract needs.
std::string format_double(double v);

// CSV schema: trial_id,t,log_wealth,stopped[,score,growth_estimate,growth_threshold]
std::string trajectories_csv(std::span<const TrialRecord> records, bool diagnostics);

// Inverse of trajectories_csv: trajectory, stopped flags and diagnostics.
std::vector<TrialRecord> parse_trajectories_csv(const std::string& csv);

// One summary object per trial: {trial_id, stopping_time, decision,
// samples_consumed, seed}.
nlohmann::ordered_json trial_summary_json(const TrialRecord& record, std::size_t trial_id,
                                          std::uint64_t seed);

// Fills the fields that live in the summary object rather than the CSV.
void apply_trial_summary(TrialRecord& record, const nlohmann::json& summary);

// FNV-1a 64-bit, hex-encoded; used as the config digest.
std::string fnv1a_hex(const std::string& text);

}  // namespace davt
