#include "lassode/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lassode/errors.hpp"

namespace lassode {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::string ratio_label(double r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g%%", std::round(r * 1000.0) / 10.0);
  return buf;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + file.string() + "'");
  out << text;
}

json report_object(const EvalReport& r) {
  json j;
  j["ratios"] = r.ratios;
  json systems = json::object();
  for (std::size_t s = 0; s < r.systems.size(); ++s) {
    systems[r.systems[s]] = {{"trajectories", r.counts[s]}, {"mse", r.mse[s]}, {"avg", r.average(s)}};
  }
  j["systems"] = systems;
  std::vector<double> means;
  for (std::size_t k = 0; k < r.ratios.size(); ++k) means.push_back(r.system_mean(k));
  j["mean_over_systems"] = means;
  j["seconds_per_trajectory"] = r.seconds_per_trajectory;
  return j;
}

}  // namespace

std::string report_table_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "prefix_ratio";
  for (const auto& s : r.systems) out << ',' << s;
  out << ",mean\n";
  for (std::size_t k = 0; k < r.ratios.size(); ++k) {
    out << ratio_label(r.ratios[k]);
    for (std::size_t s = 0; s < r.systems.size(); ++s) out << ',' << num(r.mse[s][k]);
    out << ',' << num(r.system_mean(k)) << '\n';
  }
  out << "Avg.";
  double total = 0.0;
  for (std::size_t s = 0; s < r.systems.size(); ++s) {
    out << ',' << num(r.average(s));
    total += r.average(s);
  }
  out << ',' << num(r.systems.empty() ? 0.0 : total / static_cast<double>(r.systems.size()))
      << '\n';
  return out.str();
}

void write_report_csv(const std::filesystem::path& file, const EvalReport& report) {
  write_text(file, report_table_csv(report));
}

std::string report_json(const EvalReport& report, const EvalReport* baseline) {
  json j;
  j["fingerprint"] = report.fingerprint;
  j["model"] = report_object(report);
  if (baseline) j["persistence"] = report_object(*baseline);
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& file, const EvalReport& report,
                       const EvalReport* baseline) {
  write_text(file, report_json(report, baseline));
}

void write_prediction_csv(const std::filesystem::path& file, const std::vector<double>& times,
                          const Tensor& prediction) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_trajectory_csv(file, times, prediction, "xhat");
}

std::string trajectory_svg(const std::vector<double>& times, const Tensor& truth,
                           const Tensor& prediction, std::size_t prefix_len,
                           const std::string& title) {
  if (!truth.same_shape(prediction) || truth.rows() != times.size() || times.size() < 2) {
    throw ShapeError("trajectory_svg: times, truth and prediction disagree");
  }
  const double W = 640.0, H = 360.0, pad = 40.0;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const Tensor* m : {&truth, &prediction}) {
    for (double v : m->values()) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double t0 = times.front(), t1 = times.back();
  auto px = [&](double t) { return pad + (W - 2 * pad) * (t - t0) / (t1 - t0); };
  auto py = [&](double v) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << title
    << "</text>\n";
  s << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\""
    << H - 2 * pad << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (std::size_t j = 0; j < truth.cols(); ++j) {
    const char* c = colors[j % 10];
    for (int which = 0; which < 2; ++which) {
      const Tensor& m = which == 0 ? truth : prediction;
      s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\""
        << (which == 1 ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (std::size_t i = 0; i < times.size(); ++i) {
        const double v = std::isfinite(m(i, j)) ? m(i, j) : 0.0;
        s << px(times[i]) << ',' << py(v) << ' ';
      }
      s << "\"/>\n";
    }
  }
  if (prefix_len >= 1 && prefix_len <= times.size()) {
    const double x = px(times[prefix_len - 1]);
    s << "<line x1=\"" << x << "\" y1=\"" << pad << "\" x2=\"" << x << "\" y2=\"" << H - pad
      << "\" stroke=\"black\" stroke-dasharray=\"2,2\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_trajectory_svg(const std::filesystem::path& file, const std::vector<double>& times,
                          const Tensor& truth, const Tensor& prediction, std::size_t prefix_len,
                          const std::string& title) {
  write_text(file, trajectory_svg(times, truth, prediction, prefix_len, title));
}

}  // namespace lassode
