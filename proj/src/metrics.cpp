#include "hddf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "hddf/errors.hpp"

namespace hddf {

double msde(const Eigen::VectorXd& class_marginal, ClassLabel true_class) {
  const int m = static_cast<int>(class_marginal.size());
  if (true_class < 1 || true_class > m) {
    throw ContractViolation("msde: true class out of range");
  }
  if (std::abs(class_marginal.sum() - 1.0) > 1e-6 ||
      class_marginal.minCoeff() < -1e-12) {
    throw ContractViolation("msde: marginal is not a probability vector");
  }
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    const double gt = (i + 1 == true_class) ? 1.0 : 0.0;
    const double d = gt - class_marginal(i);
    s += d * d;
  }
  return s / static_cast<double>(m);
}

double weighted_position_error(const HybridBelief& hb, const VariableKey& v,
                               const Pose2& truth) {
  double out = 0.0;
  for (const auto& h : hb.hypotheses()) {
    if (!h.belief.has(v)) {
      throw ContractViolation("weighted_position_error: variable " + v.str() +
                              " missing from a hypothesis");
    }
    out += std::exp(h.log_weight) * distance_xy(h.belief.mean_pose(v), truth);
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << "step,robot,mode,metric,value\n";
  char buf[64];
  for (const auto& r : rows) {
    if (std::isnan(r.value)) continue;
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    os << r.step << "," << r.robot << "," << r.mode << "," << r.metric << ","
       << buf << "\n";
  }
}

std::map<AggregateKey, AggregateEntry> aggregate_runs(
    const std::vector<std::vector<MetricRow>>& runs) {
  // Per run: average the metric over robots at each (mode, metric, step).
  std::map<AggregateKey, std::vector<double>> per_run_values;
  for (const auto& rows : runs) {
    std::map<AggregateKey, std::pair<double, int>> acc;
    for (const auto& r : rows) {
      if (std::isnan(r.value)) continue;
      auto& a = acc[{r.mode, r.metric, r.step}];
      a.first += r.value;
      a.second += 1;
    }
    for (const auto& [k, a] : acc) {
      per_run_values[k].push_back(a.first / a.second);
    }
  }
  std::map<AggregateKey, AggregateEntry> out;
  for (const auto& [k, vals] : per_run_values) {
    AggregateEntry e;
    e.n_runs = static_cast<int>(vals.size());
    for (double v : vals) e.mean += v;
    e.mean /= e.n_runs;
    if (e.n_runs > 1) {
      double var = 0.0;
      for (double v : vals) var += (v - e.mean) * (v - e.mean);
      var /= (e.n_runs - 1);
      e.stderr_ = std::sqrt(var / e.n_runs);
    }
    out.emplace(k, e);
  }
  return out;
}

void write_summary_json(const std::string& path,
                        const std::map<AggregateKey, AggregateEntry>& agg,
                        const std::map<std::string, double>& wall_time_s,
                        std::uint64_t base_seed, int n_runs) {
  nlohmann::json j;
  j["base_seed"] = base_seed;
  j["n_runs"] = n_runs;
  j["wall_time_s"] = wall_time_s;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [k, e] : agg) {
    nlohmann::json r;
    r["mode"] = std::get<0>(k);
    r["metric"] = std::get<1>(k);
    r["step"] = std::get<2>(k);
    r["mean"] = e.mean;
    r["stderr"] = e.stderr_;
    r["n_runs"] = e.n_runs;
    rows.push_back(std::move(r));
  }
  j["aggregates"] = std::move(rows);
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << j.dump(2) << "\n";
}

}  // namespace hddf
