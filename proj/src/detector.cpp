#include "madllm/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "madllm/embedding.hpp"
#include "madllm/errors.hpp"
#include "madllm/ops.hpp"

namespace madllm::detector {

void add_head_params(ParameterStore& store, std::size_t d_model, std::size_t patch_len, Rng& rng) {
  store.add("head.weight", normal_tensor({d_model, patch_len}, 1.0 / std::sqrt(static_cast<double>(d_model)), rng));
  store.add("head.bias", Tensor::zeros({patch_len}));
}

Tensor reconstruct(const Tensor& hidden, const ParameterStore& params) {
  const Tensor& w = params.get("head.weight");
  if (hidden.rank() != 2 || hidden.dim(1) != w.dim(0)) {
    throw DimensionError("reconstruction head expects [n x " + std::to_string(w.dim(0)) + "], got " +
                         shape_str(hidden.shape()));
  }
  return ops::add(ops::matmul(hidden, w), params.get("head.bias"));
}

AnomalyScores scores_from_reconstruction(const SeriesWindow& window, const Tensor& reconstruction,
                                         std::size_t patch_len) {
  const std::size_t m = window.features;
  if (patch_len == 0 || window.timestamps % patch_len != 0) {
    throw WindowSizeError("window length is not a multiple of the patch length");
  }
  const std::size_t p = window.timestamps / patch_len;
  if (reconstruction.rank() != 2 || reconstruction.dim(0) != p * m || reconstruction.dim(1) != patch_len) {
    throw DimensionError("reconstruction has shape " + shape_str(reconstruction.shape()) + ", expected [" +
                         std::to_string(p * m) + " x " + std::to_string(patch_len) + "]");
  }
  // wrap the time-major rows as a token series and map back to feature-major cells
  TokenSeries tm;
  tm.order = TokenOrder::TimeMajor;
  tm.features = m;
  tm.patches_per_feature = p;
  tm.patch_len = patch_len;
  tm.patches.reserve(p * m);
  const auto& r = reconstruction.data();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t row = time_major_position(j, i, m);
      tm.patches.push_back({j, i, std::vector<double>(r.begin() + static_cast<long>(row * patch_len),
                                                       r.begin() + static_cast<long>((row + 1) * patch_len))});
    }
  const std::vector<double> cells = reassemble(inverse_reorder(tm));

  AnomalyScores out;
  out.start_time = window.start_time;
  out.scores.assign(window.timestamps, 0.0);
  for (std::size_t t = 0; t < window.timestamps; ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double e = cells[t * m + j] - window.at(t, j);
      acc += e * e;
    }
    out.scores[t] = acc / static_cast<double>(m);
  }
  return out;
}

AnomalyScores score_window(const SeriesWindow& window, const DetectorModel& model) {
  NoGradGuard no_grad;
  const std::size_t len = model.model_config.patch_len;
  const TokenSeries fm = patchify(window, len);
  Tensor reprs;
  if (model.model_config.embedding.feature_term) {
    reprs = embedding::feature_representations(fm, model.encoder, model.encoder_config);
  }
  return scores_from_reconstruction(window, backbone::reconstruct_series(fm, reprs, model.model, model.model_config),
                                    len);
}

void ThresholdPolicy::validate() const {
  if (kind == ThresholdKind::Quantile && !(q > 0.0 && q < 1.0)) {
    throw ParameterError("quantile q must lie in (0, 1), got " + std::to_string(q));
  }
}

double quantile(std::span<const double> scores, double q) {
  if (scores.empty()) throw ContractError("quantile of an empty score set");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile q must lie in [0, 1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double best_f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.empty()) throw ContractError("best-F1 threshold of an empty score set");
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;

  // threshold at the maximum predicts nothing; each later cut admits the next group of tied scores
  double best_f1 = 0.0;
  double best = scores[idx.front()];
  std::size_t tp = 0, k = 0;
  while (k < idx.size()) {
    const double v = scores[idx[k]];
    while (k < idx.size() && scores[idx[k]] == v) {
      tp += labels[idx[k]] ? 1 : 0;
      ++k;
    }
    const std::size_t fp = k - tp, fn = positives - tp;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    const double cut = k < idx.size() ? 0.5 * (v + scores[idx[k]]) : v - 1.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = cut;
    }
  }
  return best;
}

double resolve_threshold(std::span<const double> scores, const ThresholdPolicy& policy,
                         std::optional<std::span<const std::uint8_t>> labels) {
  policy.validate();
  if (scores.empty()) throw ContractError("cannot resolve a threshold from no scores");
  if (policy.kind == ThresholdKind::Quantile) return quantile(scores, policy.q);
  if (!labels) throw ContractError("best-F1 threshold needs labels");
  return best_f1_threshold(scores, *labels);
}

Labels detect(std::span<const double> scores, double threshold) {
  if (!std::isfinite(threshold)) throw ParameterError("threshold must be finite");
  Labels out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace madllm::detector
