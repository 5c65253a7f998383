#pragma once

#include <chrono>
#include <ctime>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "msn/eval/frechet.hpp"
#include "msn/io/metrics.hpp"
#include "msn/tokenizer/model.hpp"

namespace msn {

struct ReportRow {
  std::string split;
  std::string model;
  std::string metric;
  double value;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::vector<ReportRow> select(const std::string& split, const std::string& model) const {
    std::vector<ReportRow> out;
    for (const auto& r : rows) {
      if (r.split == split && r.model == model) out.push_back(r);
    }
    return out;
  }

  double value(const std::string& split, const std::string& model, const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.split == split && r.model == model && r.metric == metric) return r.value;
    }
    throw InvalidArgument("report has no row " + split + "/" + model + "/" + metric);
  }

  std::string csv() const {
    std::string out = "split,model,metric,value\n";
    for (const auto& r : rows) out += r.split + "," + r.model + "," + r.metric + "," + io::format_value(r.value) + "\n";
    return out;
  }

  nlohmann::json json(const std::string& timestamp) const {
    nlohmann::json j;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["timestamp"] = timestamp;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) j["rows"].push_back({{"split", r.split}, {"model", r.model}, {"metric", r.metric}, {"value", r.value}});
    return j;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Time-averaged frames, one D-dim embedding per sample.
inline std::vector<double> mean_pooled(std::span<const float> values, std::size_t count, std::size_t steps,
                                       std::size_t dim) {
  std::vector<double> out(count * dim, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t d = 0; d < dim; ++d) out[i * dim + d] += values[(i * steps + t) * dim + d];
    }
    for (std::size_t d = 0; d < dim; ++d) out[i * dim + d] /= static_cast<double>(steps);
  }
  return out;
}

// encode -> decode for every sample.  FM sampling noise for chunk c comes from
// substream(seed, c), so any model sees the same noise.
template <class T>
std::vector<float> reconstruct_dataset(const TokenizerModel<T>& model, const LatentDataset& data, std::size_t n_steps,
                                       std::uint64_t seed, std::size_t chunk = 16) {
  std::vector<float> out;
  out.reserve(data.values.size());
  for (std::size_t start = 0, c = 0; start < data.size(); start += chunk, ++c) {
    const std::size_t count = std::min(chunk, data.size() - start);
    std::span<const float> block(data.values.data() + start * data.frame_size(), count * data.frame_size());
    auto tokens = model.encode_to_tokens(block, count);
    Rng rng = substream(seed, c);
    auto zhat = model.decode_tokens(tokens, count, n_steps, rng);
    for (auto v : zhat.values()) out.push_back(static_cast<float>(v));
  }
  return out;
}

struct CompareOptions {
  std::size_t n_steps = 32;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string first_name = "fm";
  std::string second_name = "mse";
};

template <class T>
using NamedTokenizer = std::pair<const TokenizerModel<T>*, std::string>;

// Per split ("all" plus one per class label): mean reconstruction error and
// the Frechet distance between mean-pooled reconstructions and the held-out
// references, for every model.
template <class T>
ComparisonReport evaluate_tokenizers(const LatentDataset& heldout, const std::vector<NamedTokenizer<T>>& models,
                                     const CompareOptions& opt = {}) {
  if (heldout.size() == 0) throw InvalidArgument("compare: held-out split is empty");
  std::map<std::string, std::vector<std::size_t>> splits;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    splits["all"].push_back(i);
    splits["class" + std::to_string(heldout.labels[i])].push_back(i);
  }
  ComparisonReport report;
  report.seed = opt.seed;
  report.config_hash = opt.config_hash;
  const std::size_t fs = heldout.frame_size();
  std::vector<std::vector<float>> recon;
  for (const auto& m : models) recon.push_back(reconstruct_dataset(*m.first, heldout, opt.n_steps, opt.seed));

  for (const auto& [name, idx] : splits) {
    std::vector<float> ref;
    for (auto i : idx) ref.insert(ref.end(), heldout.sample(i).begin(), heldout.sample(i).end());
    const bool fd_ok = idx.size() >= 2;
    GaussianStats ref_stats;
    if (fd_ok) ref_stats = gaussian_stats(mean_pooled(ref, idx.size(), heldout.steps, heldout.dim), heldout.dim);
    for (std::size_t m = 0; m < models.size(); ++m) {
      std::vector<float> rec;
      double err = 0.0;
      for (auto i : idx) {
        std::span<const float> r(recon[m].data() + i * fs, fs);
        err += reconstruction_error(heldout.sample(i), r);
        rec.insert(rec.end(), r.begin(), r.end());
      }
      report.rows.push_back({name, models[m].second, "recon_mse", err / static_cast<double>(idx.size())});
      if (fd_ok) {
        auto fd = frechet_distance_detail(
            gaussian_stats(mean_pooled(rec, idx.size(), heldout.steps, heldout.dim), heldout.dim), ref_stats);
        report.rows.push_back({name, models[m].second, "frechet", fd.distance});
        report.rows.push_back({name, models[m].second, "frechet_clamped_eigenvalues",
                               static_cast<double>(fd.clamped_eigenvalues)});
      }
    }
  }
  return report;
}

template <class T>
ComparisonReport compare_tokenizers(const LatentDataset& heldout, const TokenizerModel<T>& first,
                                    const TokenizerModel<T>& second, const CompareOptions& opt = {}) {
  return evaluate_tokenizers<T>(heldout, {{&first, opt.first_name}, {&second, opt.second_name}}, opt);
}

}  // namespace msn
