#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "serda/autodiff.hpp"
#include "serda/tensor.hpp"

namespace serda {

// Named parameter tensors in a fixed insertion order. The order defines the
// checkpoint layout and the optimizer slot layout.
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const Tensor& at(std::string_view name) const { return values_[index_of(name)]; }
  Tensor& at(std::string_view name) { return values_[index_of(name)]; }

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::vector<Tensor>& values() { return values_; }

  std::size_t element_count() const;
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Graph leaves for one forward/backward pass over a ParamSet.
class ParamVars {
 public:
  // `trainable` = false builds constants, so evaluation keeps no graph.
  explicit ParamVars(const ParamSet& params, bool trainable = true);

  const ad::Var& operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }

  // Gradients aligned with the ParamSet order; unreached parameters get zeros.
  std::vector<Tensor> gradients(const ad::Gradients& grads) const;

 private:
  const ParamSet* params_;
  std::vector<ad::Var> vars_;
};

// Binary checkpoint: magic "SERDACKP", u32 version, config text, then each
// parameter as (name, rank, extents, raw little-endian doubles). Loading a
// saved file reproduces every value bit for bit.
struct Checkpoint {
  std::string config_json;
  ParamSet params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace serda
