#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "msn/io/binary.hpp"

namespace msn::io {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct MetricRow {
  std::size_t step;
  std::string split;
  std::string metric;
  double value;
};

// Tidy metric rows, written as CSV `step,split,metric,value`.
class MetricsSink {
 public:
  void add(std::size_t step, std::string split, std::string metric, double value) {
    rows_.push_back({step, std::move(split), std::move(metric), value});
  }

  const std::vector<MetricRow>& rows() const { return rows_; }

  std::vector<MetricRow> filter(const std::string& metric) const {
    std::vector<MetricRow> out;
    for (const auto& r : rows_) {
      if (r.metric == metric) out.push_back(r);
    }
    return out;
  }

  std::string csv() const {
    std::string out = "step,split,metric,value\n";
    for (const auto& r : rows_) {
      out += std::to_string(r.step) + "," + r.split + "," + r.metric + "," + format_value(r.value) + "\n";
    }
    return out;
  }

  // Last value of every (split, metric) pair.
  nlohmann::json summary() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& r : rows_) j[r.split][r.metric] = r.value;
    return j;
  }

  void write_csv(const std::string& path) const { write_text(path, csv()); }

 private:
  std::vector<MetricRow> rows_;
};

}  // namespace msn::io
