#include "madllm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <vector>

#include "madllm/detector.hpp"
#include "madllm/errors.hpp"

namespace madllm::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("predictions (" + std::to_string(a) + ") and labels (" + std::to_string(b) +
                         ") differ in length");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Confusion confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  check_lengths(predictions.size(), labels.size());
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, l = labels[i] != 0;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

F1Result f1_score(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  F1Result r;
  r.counts = confusion(predictions, labels);
  const auto& c = r.counts;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  const double pr = r.precision + r.recall;
  r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  r.degenerate = c.tp + c.fp + c.fn == 0;
  return r;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size());
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // rank sum of positives with average ranks (1-based) over tie groups, kept
  // doubled so every quantity stays an exact integer
  std::size_t pos = 0, neg = 0;
  unsigned long long doubled_rank_sum = 0;
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t e = k;
    while (e < idx.size() && scores[idx[e]] == scores[idx[k]]) ++e;
    const unsigned long long doubled_avg = (k + 1) + e;  // 2 * ((k+1) + e) / 2
    for (std::size_t i = k; i < e; ++i) {
      if (labels[idx[i]]) {
        ++pos;
        doubled_rank_sum += doubled_avg;
      } else {
        ++neg;
      }
    }
    k = e;
  }
  if (pos == 0 || neg == 0) throw UndefinedMetricError("ROC AUC needs both positive and negative labels");
  // U = R+ - pos(pos+1)/2, AUC = U / (pos * neg)
  const double doubled_u = static_cast<double>(doubled_rank_sum) - static_cast<double>(pos) * static_cast<double>(pos + 1);
  return doubled_u / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

Labels point_adjust(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  check_lengths(predictions.size(), labels.size());
  Labels out(predictions.begin(), predictions.end());
  std::size_t t = 0;
  while (t < labels.size()) {
    if (!labels[t]) {
      ++t;
      continue;
    }
    std::size_t e = t;
    bool hit = false;
    for (; e < labels.size() && labels[e]; ++e) hit = hit || predictions[e] != 0;
    if (hit) std::fill(out.begin() + static_cast<long>(t), out.begin() + static_cast<long>(e), 1);
    t = e;
  }
  return out;
}

std::string MetricsReport::to_key_value(bool include_runtime) const {
  std::map<std::string, std::string> kv;
  kv["precision"] = fmt(precision);
  kv["recall"] = fmt(recall);
  kv["f1"] = fmt(f1);
  kv["f1_degenerate"] = f1_degenerate ? "true" : "false";
  kv["auc"] = auc ? fmt(*auc) : "NA";
  if (!auc_note.empty()) kv["auc_note"] = auc_note;
  kv["threshold"] = fmt(threshold);
  kv["tp"] = std::to_string(counts.tp);
  kv["fp"] = std::to_string(counts.fp);
  kv["tn"] = std::to_string(counts.tn);
  kv["fn"] = std::to_string(counts.fn);
  kv["point_adjusted"] = point_adjusted ? "true" : "false";
  if (include_runtime) kv["runtime_seconds"] = fmt(runtime_seconds);
  for (const auto& [k, v] : info) kv["info." + k] = v;
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  return out.str();
}

nlohmann::json MetricsReport::to_json(bool include_runtime) const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["f1_degenerate"] = f1_degenerate;
  j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
  if (!auc_note.empty()) j["auc_note"] = auc_note;
  j["threshold"] = threshold;
  j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}};
  j["point_adjusted"] = point_adjusted;
  if (include_runtime) j["runtime_seconds"] = runtime_seconds;
  j["info"] = info;
  return j;
}

MetricsReport evaluate(std::span<const double> scores, double threshold, const Labels* labels,
                       bool point_adjusted) {
  MetricsReport r;
  r.threshold = threshold;
  r.point_adjusted = point_adjusted;
  Labels predictions = detector::detect(scores, threshold);
  if (!labels) {
    r.auc_note = "labels not provided";
    r.f1_degenerate = true;
    r.info["predicted_anomalies"] = std::to_string(std::count(predictions.begin(), predictions.end(), 1));
    return r;
  }
  check_lengths(scores.size(), labels->size());
  if (point_adjusted) predictions = point_adjust(predictions, *labels);
  const F1Result f = f1_score(predictions, *labels);
  r.precision = f.precision;
  r.recall = f.recall;
  r.f1 = f.f1;
  r.f1_degenerate = f.degenerate;
  r.counts = f.counts;
  try {
    r.auc = roc_auc(scores, *labels);
  } catch (const UndefinedMetricError& e) {
    r.auc_note = e.what();
  }
  return r;
}

}  // namespace madllm::metrics
