#include "lassode/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lassode/errors.hpp"

namespace lassode {

namespace fs = std::filesystem;
using json = nlohmann::json;

NormalizedTrajectory normalize(const Trajectory& traj, double t_max) {
  if (traj.times.empty()) throw std::invalid_argument("normalize: empty trajectory");
  if (!(t_max > 0.0) || t_max < traj.times.back() * (1.0 - 1e-12)) {
    throw std::invalid_argument("normalize: t_max must cover the last timestamp");
  }
  NormalizedTrajectory nt;
  nt.system = traj.system;
  nt.params = traj.params;
  nt.t_max = t_max;
  nt.dt = traj.dt;
  nt.times.resize(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    nt.times[i] = std::min(1.0, traj.times[i] / t_max);
  }

  const std::size_t n = traj.states.rows();
  const std::size_t d = traj.states.cols();
  nt.values = Tensor(n, d);
  nt.scales.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = traj.states(0, j);
    double hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, traj.states(i, j));
      hi = std::max(hi, traj.states(i, j));
    }
    ChannelScale& cs = nt.scales[j];
    if (hi == lo) {
      cs = {1.0, lo, true};
      continue;  // values stay 0
    }
    const double range = hi - lo;
    cs.scale = 0.5 * range;
    cs.offset = lo + cs.scale;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = 2.0 * (traj.states(i, j) - lo) / range - 1.0;
      nt.values(i, j) = std::clamp(v, -1.0, 1.0);
    }
  }
  return nt;
}

NormalizedTrajectory normalize(const Trajectory& traj) { return normalize(traj, traj.t_max); }

Tensor denormalize(const Tensor& norm_values, const std::vector<ChannelScale>& scales) {
  if (norm_values.cols() != scales.size()) {
    throw ShapeError("denormalize: " + std::to_string(scales.size()) + " scales for " +
                     norm_values.shape_string());
  }
  Tensor out(norm_values.rows(), norm_values.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = scales[j].scale * norm_values(i, j) + scales[j].offset;
  return out;
}

std::size_t prefix_length(std::size_t points, double ratio) {
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw std::invalid_argument("slice_prefix: ratio must lie in (0, 1]");
  }
  const auto len = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(points) + 1e-9));
  if (len < 2) {
    throw PrefixTooShort("slice_prefix: ratio " + std::to_string(ratio) + " of " +
                         std::to_string(points) + " points leaves fewer than 2 observations");
  }
  return std::min(len, points);
}

PrefixedSample slice_prefix(const NormalizedTrajectory& nt, double ratio) {
  PrefixedSample s;
  s.prefix_len = prefix_length(nt.length(), ratio);
  s.prefix_ratio = ratio;
  s.traj = nt;
  s.target_mask.assign(nt.length(), true);
  return s;
}

void write_trajectory_csv(const fs::path& file, const std::vector<double>& times,
                          const Tensor& states, const std::string& column_prefix) {
  if (states.rows() != times.size()) {
    throw ShapeError("write_trajectory_csv: " + std::to_string(times.size()) + " times for " +
                     states.shape_string());
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + file.string() + "' for writing");
  out << 't';
  for (std::size_t j = 0; j < states.cols(); ++j) out << ',' << column_prefix << (j + 1);
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", times[i]);
    out << buf;
    for (std::size_t j = 0; j < states.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", states(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw LoadError("failed writing '" + file.string() + "'");
}

CsvTable read_trajectory_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open trajectory CSV '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,", 0) != 0) {
    throw LoadError("trajectory CSV '" + file.string() + "' lacks a `t,x1,...` header");
  }
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  CsvTable table;
  std::vector<double> data;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw LoadError("trajectory CSV '" + file.string() + "' line " + std::to_string(row) +
                        ": bad number '" + cell + "'");
      }
    }
    if (values.size() != d + 1) {
      throw LoadError("trajectory CSV '" + file.string() + "' line " + std::to_string(row) +
                      ": expected " + std::to_string(d + 1) + " columns");
    }
    table.times.push_back(values[0]);
    data.insert(data.end(), values.begin() + 1, values.end());
  }
  table.states = Tensor({table.times.size(), d}, std::move(data));
  return table;
}

void write_manifest(const fs::path& dataset_dir, const Manifest& manifest) {
  fs::create_directories(dataset_dir);
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"system", e.system},
                       {"params", e.params},
                       {"dt", e.dt},
                       {"t_max", e.t_max},
                       {"d_x", e.d_x},
                       {"file", e.file}});
  }
  json doc = {{"version", 1}, {"trajectories", entries}};
  const fs::path file = dataset_dir / kManifestName;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + file.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& dataset_dir) {
  const fs::path file = dataset_dir / kManifestName;
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open manifest '" + file.string() + "'");
  Manifest m;
  try {
    const json doc = json::parse(in);
    for (const auto& e : doc.at("trajectories")) {
      ManifestEntry entry;
      entry.system = e.at("system").get<std::string>();
      entry.params = e.at("params").get<std::map<std::string, double>>();
      entry.dt = e.at("dt").get<double>();
      entry.t_max = e.at("t_max").get<double>();
      entry.d_x = e.at("d_x").get<std::size_t>();
      entry.file = e.at("file").get<std::string>();
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw LoadError("manifest '" + file.string() + "' is corrupt: " + ex.what());
  }
  return m;
}

Manifest write_dataset(const fs::path& dataset_dir, const std::vector<Trajectory>& trajectories) {
  fs::create_directories(dataset_dir);
  Manifest m;
  char name[160];
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    std::snprintf(name, sizeof name, "%05zu_%s.csv", i, t.system.c_str());
    write_trajectory_csv(dataset_dir / name, t.times, t.states);
    m.entries.push_back({t.system, t.params, t.dt, t.t_max, t.state_dim(), name});
  }
  write_manifest(dataset_dir, m);
  return m;
}

std::vector<Trajectory> read_dataset(const fs::path& dataset_dir) {
  const Manifest m = read_manifest(dataset_dir);
  std::vector<Trajectory> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const fs::path file = dataset_dir / e.file;
    if (!fs::exists(file)) {
      throw LoadError("manifest references missing trajectory file '" + file.string() + "'");
    }
    CsvTable table = read_trajectory_csv(file);
    if (table.states.cols() != e.d_x) {
      throw LoadError("trajectory CSV '" + file.string() + "' has " +
                      std::to_string(table.states.cols()) + " channels, manifest says " +
                      std::to_string(e.d_x));
    }
    Trajectory t;
    t.system = e.system;
    t.params = e.params;
    t.dt = e.dt;
    t.t_max = e.t_max;
    t.times = std::move(table.times);
    t.states = std::move(table.states);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace lassode
