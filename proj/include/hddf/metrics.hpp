#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "hddf/hybrid_belief.hpp"

namespace hddf {

// Mean square detection error of a class marginal against the true label:
// (1/m) sum_i (1{i==true} - p_i)^2. Lies in [0, 1].
double msde(const Eigen::VectorXd& class_marginal, ClassLabel true_class);

// Weight-averaged Euclidean position distance of one variable's
// per-hypothesis means to the ground truth.
double weighted_position_error(const HybridBelief& hb, const VariableKey& v,
                               const Pose2& truth);

// Long-format output row of metrics.csv.
struct MetricRow {
  std::uint64_t step = 0;
  std::uint32_t robot = 0;
  std::string mode;
  std::string metric;
  double value = 0.0;
};

// Writes header step,robot,mode,metric,value; values with max precision so
// identical runs produce identical bytes.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows);

struct AggregateEntry {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error of the mean; 0 for a single run
  int n_runs = 0;
};

// Key: (mode, metric, step). Rows of one run are first averaged over robots,
// then mean/stderr are taken across runs.
using AggregateKey = std::tuple<std::string, std::string, std::uint64_t>;
std::map<AggregateKey, AggregateEntry> aggregate_runs(
    const std::vector<std::vector<MetricRow>>& runs);

void write_summary_json(const std::string& path,
                        const std::map<AggregateKey, AggregateEntry>& agg,
                        const std::map<std::string, double>& wall_time_s,
                        std::uint64_t base_seed, int n_runs);

}  // namespace hddf
