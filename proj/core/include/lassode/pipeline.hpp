#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lassode/ode_library.hpp"
#include "lassode/tensor.hpp"

namespace lassode {

class PrefixTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// x = scale * x_norm + offset.
struct ChannelScale {
  double scale = 1.0;
  double offset = 0.0;
  bool degenerate = false;
};

struct NormalizedTrajectory {
  std::string id;
  std::string system;
  std::map<std::string, double> params;
  std::vector<double> times;  // t / t_max, in [0, 1]
  Tensor values;              // (N+1) x d_x, each channel in [-1, 1]
  std::vector<ChannelScale> scales;
  double t_max = 0.0;
  double dt = 0.0;  // seconds

  std::size_t length() const { return times.size(); }
  std::size_t channels() const { return values.cols(); }
  double norm_dt() const { return dt / t_max; }
};

struct PrefixedSample {
  NormalizedTrajectory traj;
  double prefix_ratio = 1.0;
  std::size_t prefix_len = 0;
  /// Supervised timestamps; every point, prefix included.
  std::vector<bool> target_mask;
};

/// Channel j maps through x -> 2(x - min_j)/(max_j - min_j) - 1 and time
/// through t -> t / t_max. A constant channel maps to 0 with scale 1.
NormalizedTrajectory normalize(const Trajectory& traj, double t_max);
NormalizedTrajectory normalize(const Trajectory& traj);

/// Inverse value map applied to an (N+1) x d_x matrix of normalized values.
Tensor denormalize(const Tensor& norm_values, const std::vector<ChannelScale>& scales);

/// floor(ratio * (N+1)) points; throws PrefixTooShort below 2.
std::size_t prefix_length(std::size_t points, double ratio);
PrefixedSample slice_prefix(const NormalizedTrajectory& nt, double ratio);

// Trajectory CSV: header `t,x1,...,xd`, 17 significant digits.
void write_trajectory_csv(const std::filesystem::path& file, const std::vector<double>& times,
                          const Tensor& states, const std::string& column_prefix = "x");
struct CsvTable {
  std::vector<double> times;
  Tensor states;
};
CsvTable read_trajectory_csv(const std::filesystem::path& file);

struct ManifestEntry {
  std::string system;
  std::map<std::string, double> params;
  double dt = 0.0;
  double t_max = 0.0;
  std::size_t d_x = 0;
  std::string file;  // relative to the dataset directory

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  bool operator==(const Manifest&) const = default;
};

inline constexpr const char* kManifestName = "manifest.json";

void write_manifest(const std::filesystem::path& dataset_dir, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& dataset_dir);

/// Writes one CSV per trajectory plus manifest.json.
Manifest write_dataset(const std::filesystem::path& dataset_dir,
                       const std::vector<Trajectory>& trajectories);
/// Loads every trajectory named by the manifest; a missing or corrupt CSV is a
/// LoadError naming the file.
std::vector<Trajectory> read_dataset(const std::filesystem::path& dataset_dir);

}  // namespace lassode
