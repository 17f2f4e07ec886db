#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/param_store.hpp"

namespace lassode {

using Rng = std::mt19937_64;

enum class Activation { Tanh, Gelu, Identity };

Tensor xavier_uniform(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

/// Registers `<prefix>.w` (in x out) and `<prefix>.b` (1 x out).
void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng, double gain = 1.0);
ad::Var linear(ParamScope& scope, const std::string& prefix, const ad::Var& x);

/// Registers layers `<prefix>.l0 ... l{n-1}` for widths = {in, h1, ..., out}.
/// The last layer's init is scaled by `out_gain`.
void add_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& widths,
             Rng& rng, double out_gain = 1.0);
/// Applies `layers` linear maps with `act` between them (none after the last).
ad::Var mlp(ParamScope& scope, const std::string& prefix, const ad::Var& x, std::size_t layers,
            Activation act);
ad::Var activate(const ad::Var& x, Activation act);

}  // namespace lassode
