#include "lassode/ode_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "eigen_view.hpp"
#include "lassode/errors.hpp"
#include "lassode/ops.hpp"

namespace lassode {

using detail::MapC;
using detail::RowMat;

constexpr double kMergeTol = 1e-9;

PiecewiseAffineField::PiecewiseAffineField(std::size_t dz, TokenGrid g)
    : d_z(dz), grid(g), coeffs(g.size, dz * dz + dz) {}

PiecewiseAffineField::PiecewiseAffineField(std::size_t dz, TokenGrid g, Tensor c)
    : d_z(dz), grid(g), coeffs(std::move(c)) {
  if (coeffs.rows() != grid.size || coeffs.cols() != width()) {
    throw ShapeError("PiecewiseAffineField: coefficients " + coeffs.shape_string() + " for " +
                     std::to_string(grid.size) + " tokens and d_z " + std::to_string(d_z));
  }
}

void PiecewiseAffineField::set(std::size_t k, const Tensor& a, std::span<const double> b) {
  if (a.rows() != d_z || a.cols() != d_z || b.size() != d_z) {
    throw ShapeError("PiecewiseAffineField::set: A " + a.shape_string() + " with b of " +
                     std::to_string(b.size()));
  }
  double* row = coeffs.data() + k * width();
  std::copy(a.values().begin(), a.values().end(), row);
  std::copy(b.begin(), b.end(), row + d_z * d_z);
}

StepPlan StepPlan::build(const TokenGrid& grid, const std::vector<double>& eval_times,
                         std::size_t n_step) {
  for (std::size_t i = 0; i < eval_times.size(); ++i) {
    const double t = eval_times[i];
    if (!(t >= -kMergeTol && t <= 1.0 + kMergeTol) || (i > 0 && t < eval_times[i - 1])) {
      throw std::invalid_argument("StepPlan: evaluation times must be sorted within [0, 1]");
    }
  }
  std::vector<std::size_t> per_token(grid.size, 0);
  for (double t : eval_times) {
    if (t < 1.0 - kMergeTol) ++per_token[grid.token_of(t + kMergeTol)];
  }

  std::vector<double> pts;
  for (std::size_t k = 0; k < grid.size; ++k) {
    const std::size_t n = n_step > 0 ? n_step : std::max<std::size_t>(1, per_token[k]);
    const double s = grid.start(k);
    const double e = grid.end(k);
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(s + (e - s) * static_cast<double>(i) / static_cast<double>(n));
    }
  }
  pts.push_back(1.0);

  // Merge, letting evaluation times win over nearby uniform points.
  std::vector<double> merged;
  merged.reserve(pts.size() + eval_times.size());
  std::size_t ei = 0;
  std::size_t pi = 0;
  auto push = [&](double t, bool is_eval) {
    if (!merged.empty() && std::abs(t - merged.back()) <= kMergeTol) {
      if (is_eval) merged.back() = std::clamp(t, 0.0, 1.0);
      return;
    }
    merged.push_back(std::clamp(t, 0.0, 1.0));
  };
  while (pi < pts.size() || ei < eval_times.size()) {
    if (ei < eval_times.size() && (pi == pts.size() || eval_times[ei] <= pts[pi])) {
      push(eval_times[ei++], true);
    } else {
      const double t = pts[pi++];
      // A uniform point just below a pending eval time yields to it.
      if (ei < eval_times.size() && std::abs(eval_times[ei] - t) <= kMergeTol) {
        push(eval_times[ei++], true);
      } else {
        push(t, false);
      }
    }
  }

  StepPlan plan;
  plan.times = std::move(merged);
  plan.times.front() = std::min(plan.times.front(), 0.0);
  if (plan.times.front() != 0.0) plan.times.insert(plan.times.begin(), 0.0);
  for (std::size_t s = 0; s + 1 < plan.times.size(); ++s) {
    plan.step_token.push_back(grid.token_of(0.5 * (plan.times[s] + plan.times[s + 1])));
  }
  plan.eval_index.reserve(eval_times.size());
  for (double t : eval_times) {
    const auto it = std::lower_bound(plan.times.begin(), plan.times.end(), t - kMergeTol);
    if (it == plan.times.end() || std::abs(*it - t) > kMergeTol) {
      throw std::logic_error("StepPlan: evaluation time missing from the grid");
    }
    plan.eval_index.push_back(static_cast<std::size_t>(it - plan.times.begin()));
  }
  return plan;
}

namespace {

// y = A x + b for a row-major d x d matrix.
inline void affine_apply(const double* a, const double* b, const double* x, double* y,
                         std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    double acc = b[r];
    const double* ar = a + r * d;
    for (std::size_t c = 0; c < d; ++c) acc += ar[c] * x[c];
    y[r] = acc;
  }
}

// Stage buffers of one affine RK4 step: y2, y3, y4, k1, k2, k3, k4.
struct Rk4Work {
  std::vector<double> buf;
  explicit Rk4Work(std::size_t d) : buf(7 * d) {}
  double* y(std::size_t i, std::size_t d) { return buf.data() + (i - 2) * d; }
  double* k(std::size_t i, std::size_t d) { return buf.data() + (2 + i) * d; }
};

void rk4_affine_stages(const double* a, const double* b, const double* z, double h, std::size_t d,
                       Rk4Work& w) {
  double* k1 = w.k(1, d);
  double* k2 = w.k(2, d);
  double* k3 = w.k(3, d);
  double* k4 = w.k(4, d);
  double* y2 = w.y(2, d);
  double* y3 = w.y(3, d);
  double* y4 = w.y(4, d);
  affine_apply(a, b, z, k1, d);
  for (std::size_t i = 0; i < d; ++i) y2[i] = z[i] + 0.5 * h * k1[i];
  affine_apply(a, b, y2, k2, d);
  for (std::size_t i = 0; i < d; ++i) y3[i] = z[i] + 0.5 * h * k2[i];
  affine_apply(a, b, y3, k3, d);
  for (std::size_t i = 0; i < d; ++i) y4[i] = z[i] + h * k3[i];
  affine_apply(a, b, y4, k4, d);
}

void check_finite(const double* z, std::size_t d, double t, const char* who) {
  for (std::size_t i = 0; i < d; ++i) {
    if (!(std::abs(z[i]) <= kFlowLimit)) {
      throw NonFiniteError(std::string(who) + ": latent state left the finite range at t=" +
                           std::to_string(t));
    }
  }
}

// Integrates one channel; `a_rows` points at K rows of field coefficients.
void integrate_channel(const double* coeff_rows, std::size_t d, const double* z0,
                       const StepPlan& plan, double* grid_out) {
  const std::size_t width = d * d + d;
  Rk4Work w(d);
  std::copy(z0, z0 + d, grid_out);
  check_finite(grid_out, d, 0.0, "solve_piecewise");
  for (std::size_t s = 0; s < plan.steps(); ++s) {
    const double h = plan.times[s + 1] - plan.times[s];
    const double* a = coeff_rows + plan.step_token[s] * width;
    const double* b = a + d * d;
    const double* z = grid_out + s * d;
    double* zn = grid_out + (s + 1) * d;
    rk4_affine_stages(a, b, z, h, d, w);
    for (std::size_t i = 0; i < d; ++i) {
      zn[i] = z[i] + h / 6.0 * (w.k(1, d)[i] + 2.0 * w.k(2, d)[i] + 2.0 * w.k(3, d)[i] + w.k(4, d)[i]);
    }
    check_finite(zn, d, plan.times[s + 1], "solve_piecewise");
  }
}

}  // namespace

Tensor integrate_grid(const PiecewiseAffineField& field, std::span<const double> z0,
                      const StepPlan& plan) {
  if (z0.size() != field.d_z) {
    throw ShapeError("integrate_grid: z0 of size " + std::to_string(z0.size()) + " for d_z " +
                     std::to_string(field.d_z));
  }
  Tensor grid(plan.times.size(), field.d_z);
  integrate_channel(field.coeffs.data(), field.d_z, z0.data(), plan, grid.data());
  return grid;
}

LatentFlow solve_piecewise(const PiecewiseAffineField& field, std::span<const double> z0,
                           const std::vector<double>& eval_times, std::size_t n_step) {
  const StepPlan plan = StepPlan::build(field.grid, eval_times, n_step);
  const Tensor grid = integrate_grid(field, z0, plan);
  LatentFlow flow;
  flow.eval_times = eval_times;
  flow.solver = "rk4-piecewise-affine";
  flow.steps = plan.steps();
  flow.stage_evaluations = 4 * plan.steps();
  flow.states = Tensor(eval_times.size(), field.d_z);
  for (std::size_t e = 0; e < eval_times.size(); ++e) {
    const auto src = grid.row_span(plan.eval_index[e]);
    std::copy(src.begin(), src.end(), flow.states.row_span(e).begin());
  }
  return flow;
}

std::vector<double> affine_oracle(const Tensor& a, std::span<const double> b,
                                  std::span<const double> z0, double t) {
  const std::size_t d = z0.size();
  if (a.rows() != d || a.cols() != d || b.size() != d) {
    throw ShapeError("affine_oracle: A " + a.shape_string() + " for a state of size " +
                     std::to_string(d));
  }
  const std::size_t n = d + 1;
  RowMat m = RowMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) m(r, c) = a(r, c) * t;
    m(r, d) = b[r] * t;
  }
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(norm / 0.5)));
  m /= static_cast<double>(substeps);

  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < d; ++i) v(static_cast<Eigen::Index>(i)) = z0[i];
  v(static_cast<Eigen::Index>(d)) = 1.0;
  for (std::size_t s = 0; s < substeps; ++s) {
    Eigen::VectorXd term = v;
    Eigen::VectorXd sum = v;
    for (int k = 1; k <= 200; ++k) {
      term = (m * term) / static_cast<double>(k);
      sum += term;
      // With |m| <= 1/2 the tail after this term is at most |term|.
      if (term.cwiseAbs().maxCoeff() <= 1e-18 * std::max(1.0, sum.cwiseAbs().maxCoeff())) break;
    }
    v = sum;
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = v(static_cast<Eigen::Index>(i));
  return out;
}

std::vector<double> decode(const LatentFlow& flow, const Tensor& w_dec, double b_dec) {
  if (w_dec.rows() != flow.states.cols() || w_dec.cols() != 1) {
    throw ShapeError("decode: W_dec " + w_dec.shape_string() + " for states " +
                     flow.states.shape_string());
  }
  std::vector<double> x(flow.states.rows(), b_dec);
  for (std::size_t e = 0; e < x.size(); ++e)
    for (std::size_t c = 0; c < w_dec.rows(); ++c) x[e] += flow.states(e, c) * w_dec(c, 0);
  return x;
}

void MlpField::eval(std::span<const double> z, std::span<const double> cond, std::span<double> out,
                    std::vector<double>& scratch) const {
  std::size_t widest = z.size() + cond.size();
  for (const Tensor& w : weights) widest = std::max(widest, w.cols());
  scratch.resize(2 * widest);
  double* cur = scratch.data();
  double* nxt = scratch.data() + widest;
  std::copy(z.begin(), z.end(), cur);
  std::copy(cond.begin(), cond.end(), cur + z.size());
  std::size_t in = z.size() + cond.size();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Tensor& w = weights[l];
    const auto out_w = static_cast<Eigen::Index>(w.cols());
    Eigen::Map<Eigen::RowVectorXd> y(nxt, out_w);
    y.noalias() = Eigen::Map<const Eigen::RowVectorXd>(cur, static_cast<Eigen::Index>(in)) *
                  detail::view(w);
    y += Eigen::Map<const Eigen::RowVectorXd>(biases[l].data(), out_w);
    if (l + 1 < weights.size()) {
      if (act == Activation::Tanh) {
        y = y.array().tanh();
      } else if (act == Activation::Gelu) {
        for (Eigen::Index i = 0; i < out_w; ++i) y(i) = 0.5 * y(i) * (1.0 + std::erf(y(i) / std::sqrt(2.0)));
      }
    }
    std::swap(cur, nxt);
    in = w.cols();
  }
  std::copy(cur, cur + out.size(), out.begin());
}

LatentFlow solve_mlp_field(const MlpField& field, const Tensor& cond, const TokenGrid& grid,
                           std::span<const double> z0, const std::vector<double>& eval_times,
                           std::size_t n_step) {
  const std::size_t d = z0.size();
  if (cond.rows() != grid.size) {
    throw ShapeError("solve_mlp_field: conditioning " + cond.shape_string() + " for " +
                     std::to_string(grid.size) + " tokens");
  }
  const StepPlan plan = StepPlan::build(grid, eval_times, n_step);
  Tensor states(plan.times.size(), d);
  std::copy(z0.begin(), z0.end(), states.row_span(0).begin());
  std::vector<double> k1(d), k2(d), k3(d), k4(d), y(d), scratch;
  std::size_t stages = 0;
  for (std::size_t s = 0; s < plan.steps(); ++s) {
    const double h = plan.times[s + 1] - plan.times[s];
    const auto c = cond.row_span(plan.step_token[s]);
    const auto z = states.row_span(s);
    field.eval(z, c, k1, scratch);
    for (std::size_t i = 0; i < d; ++i) y[i] = z[i] + 0.5 * h * k1[i];
    field.eval(y, c, k2, scratch);
    for (std::size_t i = 0; i < d; ++i) y[i] = z[i] + 0.5 * h * k2[i];
    field.eval(y, c, k3, scratch);
    for (std::size_t i = 0; i < d; ++i) y[i] = z[i] + h * k3[i];
    field.eval(y, c, k4, scratch);
    stages += 4;
    auto zn = states.row_span(s + 1);
    for (std::size_t i = 0; i < d; ++i) zn[i] = z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    check_finite(zn.data(), d, plan.times[s + 1], "solve_mlp_field");
  }
  LatentFlow flow;
  flow.eval_times = eval_times;
  flow.solver = "rk4-mlp-field";
  flow.steps = plan.steps();
  flow.stage_evaluations = stages;
  flow.states = Tensor(eval_times.size(), d);
  for (std::size_t e = 0; e < eval_times.size(); ++e) {
    const auto src = states.row_span(plan.eval_index[e]);
    std::copy(src.begin(), src.end(), flow.states.row_span(e).begin());
  }
  return flow;
}

IntegrationCost cost_model(std::int64_t d_z, std::int64_t d_model, std::int64_t k_width,
                           std::int64_t layers, std::int64_t n_step) {
  if (layers < 2) throw std::invalid_argument("cost_model: needs at least 2 layers");
  IntegrationCost c;
  c.c_param = d_model * k_width + (layers - 2) * k_width * k_width + k_width * (d_z * d_z + d_z);
  c.c_lin = d_z * d_z;
  c.c_mlp = (d_z + d_model) * k_width + (layers - 2) * k_width * k_width + k_width * d_z;
  c.linear_total = c.c_param + n_step * c.c_lin;
  c.mlp_total = n_step * c.c_mlp;
  return c;
}

ad::Var estimate_params(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens) {
  return ad::scale(mlp(scope, "decoder.param", tokens, 2, Activation::Tanh), cfg.coeff_scale);
}

namespace {

struct FlowCache {
  std::vector<Tensor> grids;  // per channel, (steps + 1) x d_z
};

}  // namespace

ad::Var piecewise_flow(const ad::Var& coeffs, const ad::Var& z0, const StepPlan& plan,
                       std::size_t k_token) {
  const std::size_t d_x = z0.rows();
  const std::size_t d = z0.cols();
  if (coeffs.rows() != d_x * k_token || coeffs.cols() != d * d + d) {
    throw ShapeError("piecewise_flow: coefficients " + coeffs.value().shape_string() +
                     " for z0 " + z0.value().shape_string() + " and " + std::to_string(k_token) +
                     " tokens");
  }
  const std::size_t E = plan.eval_index.size();
  const std::size_t width = d * d + d;
  auto cache = std::make_shared<FlowCache>();
  Tensor out(d_x * E, d);
  for (std::size_t j = 0; j < d_x; ++j) {
    Tensor grid(plan.times.size(), d);
    integrate_channel(coeffs.value().data() + j * k_token * width, d,
                      z0.value().data() + j * d, plan, grid.data());
    for (std::size_t e = 0; e < E; ++e) {
      const auto src = grid.row_span(plan.eval_index[e]);
      std::copy(src.begin(), src.end(), out.row_span(j * E + e).begin());
    }
    cache->grids.push_back(std::move(grid));
  }

  return ad::make_op(
      "piecewise_flow", std::move(out), {coeffs, z0},
      [cache, plan, k_token, d_x, d, E, width](ad::Node& self) {
        ad::Node& cn = *self.inputs[0];
        ad::Node& zn = *self.inputs[1];
        Tensor dc(cn.value.rows(), cn.value.cols());
        Tensor dz0(d_x, d);
        // eval rows landing on each grid point
        std::vector<std::vector<std::size_t>> at(plan.times.size());
        for (std::size_t e = 0; e < E; ++e) at[plan.eval_index[e]].push_back(e);

        Rk4Work w(d);
        std::vector<double> lam(d), dk1(d), dk2(d), dk3(d), dk4(d), dy(d);
        for (std::size_t j = 0; j < d_x; ++j) {
          const Tensor& grid = cache->grids[j];
          const double* rows = cn.value.data() + j * k_token * width;
          double* drows = dc.data() + j * k_token * width;
          std::fill(lam.begin(), lam.end(), 0.0);
          for (std::size_t m = plan.times.size(); m-- > 0;) {
            for (std::size_t e : at[m]) {
              const double* g = self.grad.data() + (j * E + e) * d;
              for (std::size_t i = 0; i < d; ++i) lam[i] += g[i];
            }
            if (m == 0) break;
            const std::size_t s = m - 1;
            const double h = plan.times[m] - plan.times[s];
            const std::size_t tok = plan.step_token[s];
            const double* a = rows + tok * width;
            const double* b = a + d * d;
            double* ga = drows + tok * width;
            double* gb = ga + d * d;
            const double* z = grid.data() + s * d;
            rk4_affine_stages(a, b, z, h, d, w);
            for (std::size_t i = 0; i < d; ++i) {
              dk1[i] = h / 6.0 * lam[i];
              dk2[i] = h / 3.0 * lam[i];
              dk3[i] = h / 3.0 * lam[i];
              dk4[i] = h / 6.0 * lam[i];
            }
            // Walks stages 4..1: k_i = A y_i + b.
            auto stage = [&](std::vector<double>& dk, const double* yi, std::vector<double>* prev,
                             double coef) {
              for (std::size_t r = 0; r < d; ++r) {
                gb[r] += dk[r];
                for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += dk[r] * yi[c];
              }
              for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < d; ++r) acc += a[r * d + c] * dk[r];
                dy[c] = acc;
              }
              for (std::size_t c = 0; c < d; ++c) {
                lam[c] += dy[c];
                if (prev) (*prev)[c] += coef * dy[c];
              }
            };
            stage(dk4, w.y(4, d), &dk3, h);
            stage(dk3, w.y(3, d), &dk2, 0.5 * h);
            stage(dk2, w.y(2, d), &dk1, 0.5 * h);
            stage(dk1, z, nullptr, 0.0);
          }
          std::copy(lam.begin(), lam.end(), dz0.row_span(j).begin());
        }
        ad::accumulate(cn, dc);
        ad::accumulate(zn, dz0);
      });
}

ad::Var mlp_field_flow(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens,
                       const ad::Var& z0, const StepPlan& plan) {
  const std::size_t d_x = z0.rows();
  const std::size_t K = cfg.k_token;
  std::vector<ad::Var> cond(K);
  auto cond_for = [&](std::size_t tok) -> const ad::Var& {
    if (!cond[tok]) {
      std::vector<std::size_t> rows(d_x);
      for (std::size_t j = 0; j < d_x; ++j) rows[j] = j * K + tok;
      cond[tok] = ad::gather_rows(tokens, rows);
    }
    return cond[tok];
  };
  auto f = [&](const ad::Var& y, const ad::Var& c) {
    return mlp(scope, "decoder.field", ad::concat_cols({y, c}), cfg.mlp_field_layers,
               Activation::Tanh);
  };

  std::vector<ad::Var> at_grid(plan.times.size());
  ad::Var z = z0;
  at_grid[0] = z;
  for (std::size_t s = 0; s < plan.steps(); ++s) {
    const double h = plan.times[s + 1] - plan.times[s];
    const ad::Var& c = cond_for(plan.step_token[s]);
    const ad::Var k1 = f(z, c);
    const ad::Var k2 = f(ad::add(z, ad::scale(k1, 0.5 * h)), c);
    const ad::Var k3 = f(ad::add(z, ad::scale(k2, 0.5 * h)), c);
    const ad::Var k4 = f(ad::add(z, ad::scale(k3, h)), c);
    const ad::Var incr = ad::add(ad::add(k1, k4), ad::scale(ad::add(k2, k3), 2.0));
    z = ad::add(z, ad::scale(incr, h / 6.0));
    check_finite(z.value().data(), z.value().size(), plan.times[s + 1], "mlp_field_flow");
    at_grid[s + 1] = z;
  }
  const std::size_t E = plan.eval_index.size();
  std::vector<ad::Var> picked;
  picked.reserve(E);
  for (std::size_t e = 0; e < E; ++e) picked.push_back(at_grid[plan.eval_index[e]]);
  // time-major (row e*d_x + j) -> channel-major (row j*E + e)
  const ad::Var stacked = ad::concat_rows(picked);
  std::vector<std::size_t> order(d_x * E);
  for (std::size_t j = 0; j < d_x; ++j)
    for (std::size_t e = 0; e < E; ++e) order[j * E + e] = e * d_x + j;
  return ad::gather_rows(stacked, order);
}

ad::Var readout(ParamScope& scope, const ad::Var& states) {
  return linear(scope, "decoder.readout", states);
}

MlpField mlp_field_from_store(const ParamStore& store, const ModelConfig& cfg) {
  MlpField f;
  f.d_z = cfg.d_z;
  f.act = Activation::Tanh;
  for (std::size_t l = 0; l < cfg.mlp_field_layers; ++l) {
    const std::string p = "decoder.field.l" + std::to_string(l);
    f.weights.push_back(store.value(p + ".w"));
    f.biases.push_back(store.value(p + ".b"));
  }
  return f;
}

void add_decoder_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t dz = cfg.d_z;
  if (cfg.ablation.mlp_ode_field) {
    std::vector<std::size_t> widths{dz + cfg.d_model};
    for (std::size_t l = 0; l + 1 < cfg.mlp_field_layers; ++l) widths.push_back(cfg.mlp_field_hidden);
    widths.push_back(dz);
    add_mlp(store, "decoder.field", widths, rng, 0.1);
  } else {
    add_mlp(store, "decoder.param", {cfg.d_model, cfg.param_hidden, dz * dz + dz}, rng,
          0.1 / cfg.coeff_scale);
  }
  add_linear(store, "decoder.readout", dz, 1, rng);
}

}  // namespace lassode
