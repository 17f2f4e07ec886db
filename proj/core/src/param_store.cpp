#include "lassode/param_store.hpp"

#include <cmath>

namespace lassode {

void ParamStore::add(const std::string& path, Tensor value, ParamFlags flags) {
  if (path.empty()) throw std::invalid_argument("ParamStore: empty parameter path");
  if (value.shape().size() != 2) {
    throw ShapeError("ParamStore: parameter '" + path + "' must be 2-D, got " +
                     value.shape_string());
  }
  auto [it, inserted] = entries_.emplace(path, Entry{std::move(value), flags});
  if (!inserted) throw std::invalid_argument("ParamStore: duplicate parameter path '" + path + "'");
}

void ParamStore::remove(const std::string& path) {
  if (entries_.erase(path) == 0) {
    throw std::out_of_range("ParamStore: unknown parameter path '" + path + "'");
  }
}

const ParamStore::Entry& ParamStore::entry(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter path '" + path + "'");
  }
  return it->second;
}

const Tensor& ParamStore::value(const std::string& path) const { return entry(path).value; }

Tensor& ParamStore::mutable_value(const std::string& path) {
  return const_cast<Entry&>(entry(path)).value;
}

ParamFlags ParamStore::flags(const std::string& path) const { return entry(path).flags; }

void ParamStore::set_flags(const std::string& path, ParamFlags flags) {
  const_cast<Entry&>(entry(path)).flags = flags;
}

void ParamStore::set_trainable(const std::string& path, bool trainable) {
  const_cast<Entry&>(entry(path)).flags.trainable = trainable;
}

void ParamStore::freeze_all() {
  for (auto& [_, e] : entries_) e.flags.trainable = false;
}

std::vector<std::string> ParamStore::paths() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [p, _] : entries_) out.push_back(p);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_)
    if (e.flags.trainable) n += e.value.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    const auto& x = a->second;
    const auto& y = b->second;
    if (x.flags.trainable != y.flags.trainable || x.flags.lora_adapter != y.flags.lora_adapter) {
      return false;
    }
    if (x.value.shape() != y.value.shape()) return false;
    for (std::size_t i = 0; i < x.value.size(); ++i)
      if (x.value[i] != y.value[i]) return false;
  }
  return true;
}

ParamScope::ParamScope(const ParamStore& store, bool with_grad)
    : store_(&store), with_grad_(with_grad) {}

ad::Var ParamScope::get(const std::string& path) {
  auto it = leaves_.find(path);
  if (it != leaves_.end()) return it->second;
  const bool trainable = with_grad_ && store_->flags(path).trainable;
  ad::Var leaf(store_->value(path), trainable);
  leaves_.emplace(path, leaf);
  return leaf;
}

GradMap ParamScope::gradients() const {
  GradMap out;
  for (const auto& [path, leaf] : leaves_) {
    if (!leaf.requires_grad()) continue;
    if (leaf.has_grad()) {
      out.emplace(path, leaf.grad());
    } else {
      out.emplace(path, Tensor(leaf.rows(), leaf.cols()));
    }
  }
  return out;
}

void add_into(GradMap& total, const GradMap& part) {
  for (const auto& [path, g] : part) {
    auto it = total.find(path);
    if (it == total.end()) {
      total.emplace(path, g);
      continue;
    }
    Tensor& t = it->second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += g[i];
  }
}

void scale_grads(GradMap& grads, double s) {
  for (auto& [_, g] : grads)
    for (double& v : g.values()) v *= s;
}

double global_norm(const GradMap& grads) {
  double s = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace lassode
