#include "madllm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "madllm/errors.hpp"
#include "madllm/random.hpp"

namespace madllm::data {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, const std::string& origin, std::size_t line, std::size_t col) {
  const std::string_view t = trim(cell);
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw DataError(origin + ": line " + std::to_string(line) + ", column " + std::to_string(col) +
                    ": expected a finite number, found '" + std::string(t) + "'");
  }
  return v;
}

// Lines of the text with trailing blank lines removed.
std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    lines.push_back(rest.substr(0, nl));
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

TimeSeries parse_csv(const std::string& text, const std::string& origin) {
  TimeSeries s;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) throw DataError(origin + ": line " + std::to_string(i + 1) + ": empty line");
    std::size_t cols = 0;
    std::string_view rest = lines[i];
    while (true) {
      const auto comma = rest.find(',');
      s.values.push_back(parse_cell(rest.substr(0, comma), origin, i + 1, cols + 1));
      ++cols;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (i == 0) {
      s.cols = cols;
    } else if (cols != s.cols) {
      throw DataError(origin + ": line " + std::to_string(i + 1) + ": expected " + std::to_string(s.cols) +
                      " columns, found " + std::to_string(cols));
    }
  }
  if (lines.empty()) throw DataError(origin + ": expected at least one row, found none");
  s.rows = lines.size();
  return s;
}

TimeSeries read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

Labels parse_labels(const std::string& text, const std::string& origin) {
  const TimeSeries raw = parse_csv(text, origin);
  if (raw.rows > 0 && raw.cols != 1) {
    throw DataError(origin + ": label file columns: expected 1, found " + std::to_string(raw.cols));
  }
  Labels labels(raw.rows);
  for (std::size_t t = 0; t < raw.rows; ++t) {
    const double v = raw.values[t];
    if (v != 0.0 && v != 1.0) {
      throw DataError(origin + ": line " + std::to_string(t + 1) + ": expected label 0 or 1, found " +
                      format_double(v));
    }
    labels[t] = v == 1.0 ? 1 : 0;
  }
  return labels;
}

Labels read_labels(const fs::path& path) { return parse_labels(read_file(path), path.string()); }

void write_csv(const fs::path& path, const TimeSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t t = 0; t < series.rows; ++t) {
    for (std::size_t j = 0; j < series.cols; ++j) {
      if (j) out << ',';
      out << format_double(series.at(t, j));
    }
    out << '\n';
  }
}

void write_labels(const fs::path& path, const Labels& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (auto l : labels) out << (l ? '1' : '0') << '\n';
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  try {
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.features = j.at("features").get<std::size_t>();
    if (m.features == 0) throw ConfigError("manifest " + m.name + ": features must be positive");
    if (j.contains("train_rows")) m.train_rows = j["train_rows"].get<std::size_t>();
    if (j.contains("test_rows")) m.test_rows = j["test_rows"].get<std::size_t>();
    if (j.contains("anomaly_ratio_percent")) {
      m.anomaly_ratio_percent = j["anomaly_ratio_percent"].get<double>();
      if (!(*m.anomaly_ratio_percent >= 0.0 && *m.anomaly_ratio_percent < 100.0)) {
        throw ConfigError("manifest " + m.name + ": anomaly_ratio_percent must lie in [0, 100)");
      }
    }
    auto files = [&](const nlohmann::json& e, std::string name) {
      SubsetFiles f;
      f.name = std::move(name);
      f.train = resolve(base_dir, e.at("train").get<std::string>());
      f.test = resolve(base_dir, e.at("test").get<std::string>());
      if (e.contains("labels")) f.labels = resolve(base_dir, e["labels"].get<std::string>());
      return f;
    };
    if (j.contains("subsets")) {
      for (const auto& e : j["subsets"]) m.subsets.push_back(files(e, e.at("name").get<std::string>()));
      if (m.subsets.empty()) throw ConfigError("manifest " + m.name + ": empty subset list");
    } else {
      m.subsets.push_back(files(j, m.name));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset manifest: ") + e.what());
  }
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::size_t Dataset::train_rows() const {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.train.rows;
  return n;
}

std::size_t Dataset::test_rows() const {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.test.rows;
  return n;
}

Dataset load_dataset(const DatasetManifest& manifest) {
  auto violation = [&](const std::string& what, const std::string& expected, const std::string& found) {
    return ManifestViolation(manifest.name + ": " + what + ": expected " + expected + ", found " + found);
  };
  auto read = [&](const fs::path& path, auto reader) {
    try {
      return reader(path);
    } catch (const ManifestViolation&) {
      throw;
    } catch (const DataError& e) {
      throw ManifestViolation(manifest.name + ": " + e.what());
    }
  };

  Dataset d;
  d.name = manifest.name;
  d.anomaly_ratio_percent = manifest.anomaly_ratio_percent;
  for (const SubsetFiles& f : manifest.subsets) {
    DatasetPart part;
    part.name = f.name;
    part.train = read(f.train, [](const fs::path& p) { return read_csv(p); });
    part.test = read(f.test, [](const fs::path& p) { return read_csv(p); });
    for (const auto* s : {&part.train, &part.test}) {
      const auto& path = s == &part.train ? f.train : f.test;
      if (s->cols != manifest.features && s->rows > 0) {
        throw violation(path.string() + " column count", std::to_string(manifest.features), std::to_string(s->cols));
      }
    }
    if (!f.labels.empty()) {
      part.labels = read(f.labels, [](const fs::path& p) { return read_labels(p); });
      if (part.labels->size() != part.test.rows) {
        throw violation(f.labels.string() + " label count", std::to_string(part.test.rows) + " (test rows)",
                        std::to_string(part.labels->size()));
      }
    }
    d.parts.push_back(std::move(part));
  }
  if (manifest.train_rows && d.train_rows() != *manifest.train_rows) {
    throw violation("train rows", std::to_string(*manifest.train_rows), std::to_string(d.train_rows()));
  }
  if (manifest.test_rows && d.test_rows() != *manifest.test_rows) {
    throw violation("test rows", std::to_string(*manifest.test_rows), std::to_string(d.test_rows()));
  }
  return d;
}

DatasetPart concatenate(const Dataset& dataset) {
  if (dataset.parts.empty()) throw InsufficientDataError("dataset has no parts");
  DatasetPart out;
  out.name = dataset.name;
  out.train.cols = out.test.cols = dataset.parts.front().train.cols;
  const bool labeled = std::all_of(dataset.parts.begin(), dataset.parts.end(),
                                   [](const DatasetPart& p) { return p.labels.has_value(); });
  if (labeled) out.labels.emplace();
  for (const auto& p : dataset.parts) {
    out.train.values.insert(out.train.values.end(), p.train.values.begin(), p.train.values.end());
    out.train.rows += p.train.rows;
    out.test.values.insert(out.test.values.end(), p.test.values.begin(), p.test.values.end());
    out.test.rows += p.test.rows;
    if (labeled) out.labels->insert(out.labels->end(), p.labels->begin(), p.labels->end());
  }
  return out;
}

std::size_t subsample_length(std::size_t rows, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("training fraction must lie in (0, 1], got " + format_double(fraction));
  }
  const double x = fraction * static_cast<double>(rows);
  // products like 0.2 * 708405 land a rounding step above an integer
  const double nearest = std::round(x);
  const double n = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::min(rows, static_cast<std::size_t>(n));
}

TimeSeries subsample_training(const TimeSeries& train, double fraction) {
  return train.slice(0, subsample_length(train.rows, fraction));
}

std::vector<double> SyntheticSpec::resolved_periods() const {
  if (!periods.empty()) return periods;
  std::vector<double> p(features);
  for (std::size_t j = 0; j < features; ++j) p[j] = 12.0 * std::pow(1.45, static_cast<double>(j));
  return p;
}

std::vector<std::size_t> SyntheticSpec::resolved_group() const {
  if (!confounder_group.empty()) return confounder_group;
  return {features > 1 ? 1u : 0u};
}

void SyntheticSpec::validate() const {
  if (features == 0 || length == 0) throw ParameterError("synthetic series needs features and length");
  if (!(confounder_rate >= 0.0 && anomaly_rate >= 0.0 && confounder_rate + anomaly_rate < 1.0)) {
    throw ParameterError("event rates must be non-negative and sum to less than 1");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(spike_amplitude)) throw ParameterError("invalid noise or amplitude");
  if (min_event == 0 || min_event > max_event) throw ParameterError("event lengths need 1 <= min_event <= max_event");
  if (!periods.empty() && periods.size() != features) throw ParameterError("one period per feature required");
  for (double p : periods)
    if (!(p > 0.0)) throw ParameterError("periods must be positive");
  if (confounder_rate > 0.0) {
    if (features < 2) throw ParameterError("confounder events need at least 2 features");
    auto g = resolved_group();
    std::sort(g.begin(), g.end());
    if (std::adjacent_find(g.begin(), g.end()) != g.end() || g.back() >= features || g.size() >= features) {
      throw ParameterError("confounder group must be a strict subset of distinct features");
    }
  }
  const double rate = confounder_rate + anomaly_rate;
  if (rate > 0.0) {
    const double slot = 0.5 * static_cast<double>(min_event + max_event) / rate;
    if (slot < static_cast<double>(max_event + 2)) {
      throw ParameterError("event rates too high for the event lengths: slots of " + format_double(slot) +
                           " steps cannot hold events of " + std::to_string(max_event));
    }
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"features", features},
          {"length", length},
          {"periods", periods},
          {"confounder_rate", confounder_rate},
          {"anomaly_rate", anomaly_rate},
          {"noise_std", noise_std},
          {"spike_amplitude", spike_amplitude},
          {"min_event", min_event},
          {"max_event", max_event},
          {"confounder_group", confounder_group},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "features") s.features = value.get<std::size_t>();
    else if (key == "length") s.length = value.get<std::size_t>();
    else if (key == "periods") s.periods = value.get<std::vector<double>>();
    else if (key == "confounder_rate") s.confounder_rate = value.get<double>();
    else if (key == "anomaly_rate") s.anomaly_rate = value.get<double>();
    else if (key == "noise_std") s.noise_std = value.get<double>();
    else if (key == "spike_amplitude") s.spike_amplitude = value.get<double>();
    else if (key == "min_event") s.min_event = value.get<std::size_t>();
    else if (key == "max_event") s.max_event = value.get<std::size_t>();
    else if (key == "confounder_group") s.confounder_group = value.get<std::vector<std::size_t>>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown synthetic key '" + key + "'");
  }
  return s;
}

SyntheticSeries generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x5E71E5));
  const std::size_t m = spec.features, n = spec.length;
  const auto periods = spec.resolved_periods();
  const auto group = spec.resolved_group();

  SyntheticSeries out;
  out.series.rows = n;
  out.series.cols = m;
  out.series.values.resize(n * m);
  out.labels.assign(n, 0);

  std::vector<double> phase(m);
  for (double& p : phase) p = uniform_real(0.0, 2.0 * M_PI, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < m; ++j) {
      out.series.at(t, j) = std::sin(2.0 * M_PI * static_cast<double>(t) / periods[j] + phase[j]) +
                            spec.noise_std * noise(rng);
    }

  const double rate = spec.confounder_rate + spec.anomaly_rate;
  if (rate == 0.0) return out;
  const double slot = 0.5 * static_cast<double>(spec.min_event + spec.max_event) / rate;
  const double anomaly_share = spec.anomaly_rate / rate;
  const double offset = uniform_real(0.0, 1.0, rng);
  const auto slots = static_cast<std::size_t>(std::floor(static_cast<double>(n) / slot));

  for (std::size_t k = 0; k < slots; ++k) {
    const auto begin = static_cast<std::size_t>(std::ceil(static_cast<double>(k) * slot));
    const auto end = static_cast<std::size_t>(std::floor(static_cast<double>(k + 1) * slot));
    const std::size_t len = spec.min_event + uniform_index(spec.max_event - spec.min_event + 1, rng);
    const std::size_t start = begin + uniform_index(end - begin - len + 1, rng);
    const bool anomaly = std::floor(offset + static_cast<double>(k + 1) * anomaly_share) >
                         std::floor(offset + static_cast<double>(k) * anomaly_share);
    SyntheticEvent ev{anomaly ? EventKind::Anomaly : EventKind::Confounder, start, start + len};

    std::vector<std::size_t> hit;
    if (anomaly) {
      hit.resize(m);
      for (std::size_t j = 0; j < m; ++j) hit[j] = j;
    } else {
      hit = group;
    }
    for (std::size_t j : hit)
      for (std::size_t t = ev.begin; t < ev.end; ++t) out.series.at(t, j) += spec.spike_amplitude;
    if (anomaly) std::fill(out.labels.begin() + static_cast<long>(ev.begin), out.labels.begin() + static_cast<long>(ev.end), 1);
    out.events.push_back(ev);
  }
  return out;
}

Dataset synthetic_dataset(const SyntheticSpec& spec) {
  SyntheticSeries s = generate_synthetic(spec);
  const std::size_t half = spec.length / 2;
  Dataset d;
  d.name = "synthetic";
  d.anomaly_ratio_percent = 100.0 * spec.anomaly_rate;
  DatasetPart part;
  part.name = "synthetic";
  part.train = s.series.slice(0, half);
  part.test = s.series.slice(half, spec.length);
  part.labels = Labels(s.labels.begin() + static_cast<long>(half), s.labels.end());
  d.parts.push_back(std::move(part));
  return d;
}

}  // namespace madllm::data
