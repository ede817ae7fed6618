#pragma once

#include <string>
#include <vector>

#include "flowlab/likelihood.hpp"
#include "flowlab/moments.hpp"
#include "flowlab/ood.hpp"

#include "json.hpp"

namespace flowlab {

nlohmann::ordered_json moments_to_json(const DataMoments& moments);
DataMoments moments_from_json(const nlohmann::ordered_json& j);
DataMoments load_moments_json(const std::string& path);

nlohmann::ordered_json gap_to_json(const GapPrediction& gap);
nlohmann::ordered_json bound_report_to_json(const BoundReport& report);

void write_json(const std::string& path, const nlohmann::ordered_json& j);
nlohmann::ordered_json read_json(const std::string& path);

// Per-example breakdown CSV: example_id, prior_term, volume_term, total, bpd.
void write_breakdown_csv(const std::string& path, const std::vector<LikelihoodBreakdown>& rows);

// Histogram CSV: bin_left, bin_right, count over [min, max] of the values.
void write_histogram_csv(const std::string& path, const std::vector<double>& values,
                         std::size_t bins);

void write_sweep_csv(const std::string& path, const std::vector<BoundsSweepRow>& rows);

}  // namespace flowlab
