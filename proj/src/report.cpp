#include "flowlab/report.hpp"

#include <algorithm>
#include <fstream>

#include "flowlab/errors.hpp"

namespace flowlab {

nlohmann::ordered_json moments_to_json(const DataMoments& moments) {
  nlohmann::ordered_json j;
  j["count"] = moments.count;
  j["shape"] = moments.example_shape;
  j["mean"] = moments.mean;
  j["variance"] = moments.variance;
  j["channel_var_sums"] = moments.channel_var_sums;
  return j;
}

DataMoments moments_from_json(const nlohmann::ordered_json& j) {
  DataMoments m;
  m.count = j.at("count").get<std::size_t>();
  m.example_shape = j.at("shape").get<Shape>();
  m.mean = j.at("mean").get<std::vector<double>>();
  m.variance = j.at("variance").get<std::vector<double>>();
  m.channel_var_sums = j.at("channel_var_sums").get<std::vector<double>>();
  return m;
}

DataMoments load_moments_json(const std::string& path) { return moments_from_json(read_json(path)); }

nlohmann::ordered_json gap_to_json(const GapPrediction& gap) {
  nlohmann::ordered_json j;
  j["total_nats"] = gap.total;
  j["per_channel"] = gap.per_channel;
  j["sigma_psi"] = gap.sigma_psi;
  j["alpha"] = gap.alpha;
  j["channel_var_sums_q"] = gap.sq;
  j["channel_var_sums_p"] = gap.sp;
  return j;
}

nlohmann::ordered_json bound_report_to_json(const BoundReport& report) {
  nlohmann::ordered_json j;
  j["name"] = report.name;
  j["lhs"] = report.lhs;
  j["rhs"] = report.rhs;
  j["satisfied"] = report.satisfied;
  j["worst_margin"] = report.worst_margin;
  j["checked"] = report.checked;
  j["note"] = report.note;
  return j;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("JSON write failed: " + path);
}

nlohmann::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }
  return j;
}

void write_breakdown_csv(const std::string& path, const std::vector<LikelihoodBreakdown>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "example_id,prior_term,volume_term,total,bpd\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << "," << rows[i].prior_term << "," << rows[i].volume_term << "," << rows[i].total << ","
        << rows[i].bpd << "\n";
  }
  if (!out) throw IoError("breakdown CSV write failed");
}

void write_histogram_csv(const std::string& path, const std::vector<double>& values,
                         std::size_t bins) {
  if (bins == 0) throw InvalidConfig("histogram needs at least one bin");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "bin_left,bin_right,count\n";
  if (values.empty()) return;
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  double lo = *mn_it, hi = *mx_it;
  if (lo == hi) hi = lo + 1.0;  // degenerate range: single occupied bin
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    std::size_t b = static_cast<std::size_t>((v - lo) / width);
    if (b >= bins) b = bins - 1;
    ++counts[b];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    out << lo + width * static_cast<double>(b) << "," << lo + width * static_cast<double>(b + 1)
        << "," << counts[b] << "\n";
  }
  if (!out) throw IoError("histogram CSV write failed");
}

void write_sweep_csv(const std::string& path, const std::vector<BoundsSweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "dim,mean_prior_term,mean_volume_term,max_volume_term,lipschitz_hat,bound_satisfied,"
         "bound_worst_margin\n";
  for (const auto& r : rows) {
    out << r.dim << "," << r.mean_prior << "," << r.mean_volume << "," << r.max_volume << ","
        << r.lipschitz_hat << "," << (r.peak_bound.satisfied ? 1 : 0) << ","
        << r.peak_bound.worst_margin << "\n";
  }
  if (!out) throw IoError("sweep CSV write failed");
}

}  // namespace flowlab
