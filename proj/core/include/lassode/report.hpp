#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "lassode/evaluation.hpp"

namespace lassode {

/// Ratio rows ("30%", "60%", "90%", "Avg.") against one column per system,
/// plus a trailing column with the mean over systems.
std::string report_table_csv(const EvalReport& report);
void write_report_csv(const std::filesystem::path& file, const EvalReport& report);

/// Machine-readable summary. `baseline`, when given, is embedded under
/// "persistence" with the same layout.
std::string report_json(const EvalReport& report, const EvalReport* baseline = nullptr);
void write_report_json(const std::filesystem::path& file, const EvalReport& report,
                       const EvalReport* baseline = nullptr);

/// Header `t,xhat1,...,xhatd`.
void write_prediction_csv(const std::filesystem::path& file, const std::vector<double>& times,
                          const Tensor& prediction);

/// Line plot of truth (solid) and prediction (dashed) per channel with a
/// vertical marker at the last observed time.
std::string trajectory_svg(const std::vector<double>& times, const Tensor& truth,
                           const Tensor& prediction, std::size_t prefix_len,
                           const std::string& title);
void write_trajectory_svg(const std::filesystem::path& file, const std::vector<double>& times,
                          const Tensor& truth, const Tensor& prediction, std::size_t prefix_len,
                          const std::string& title);

}  // namespace lassode
