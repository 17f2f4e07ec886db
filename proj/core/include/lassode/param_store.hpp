#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/tensor.hpp"

namespace lassode {

struct ParamFlags {
  bool trainable = true;
  bool lora_adapter = false;
};

using GradMap = std::map<std::string, Tensor>;

/// Every learnable tensor of a model, addressed by a dotted path such as
/// `backbone.layer0.attn.w_q`. Iteration order is the lexical path order.
class ParamStore {
 public:
  void add(const std::string& path, Tensor value, ParamFlags flags = {});
  void remove(const std::string& path);
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }

  const Tensor& value(const std::string& path) const;
  Tensor& mutable_value(const std::string& path);
  ParamFlags flags(const std::string& path) const;
  void set_flags(const std::string& path, ParamFlags flags);
  void set_trainable(const std::string& path, bool trainable);
  void freeze_all();

  std::vector<std::string> paths() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::size_t trainable_count() const;

  bool operator==(const ParamStore& other) const;

 private:
  struct Entry {
    Tensor value;
    ParamFlags flags;
  };
  const Entry& entry(const std::string& path) const;
  std::map<std::string, Entry> entries_;
};

/// A per-forward view of a store. Each requested parameter becomes a fresh
/// leaf of the graph (a copy of the stored value), so concurrent forwards over
/// the same store never share gradient slots.
class ParamScope {
 public:
  explicit ParamScope(const ParamStore& store, bool with_grad = true);

  ad::Var get(const std::string& path);
  bool has(const std::string& path) const { return store_->contains(path); }
  const ParamStore& store() const { return *store_; }

  /// Gradients of every trainable leaf touched by this scope. Leaves that
  /// received no gradient report zeros.
  GradMap gradients() const;

 private:
  const ParamStore* store_;
  bool with_grad_;
  std::map<std::string, ad::Var> leaves_;
};

void add_into(GradMap& total, const GradMap& part);
void scale_grads(GradMap& grads, double s);
double global_norm(const GradMap& grads);

}  // namespace lassode
