#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncopt/rng.hpp"
#include "ncopt/tape.hpp"
#include "ncopt/tensor.hpp"

namespace ncopt {

// Named tensors in registration order. Weight matrices are stored (in x out)
// so forwards are matmul(x, W) with one row per item. Non-trainable entries
// hold running statistics and other buffers.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    Tensor<T> value;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, int rows, int cols, bool trainable = true) {
    NC_REQUIRE(!map_.count(name), "duplicate parameter '" << name << "'");
    order_.push_back(name);
    Entry& e = map_[name];
    e.value = Tensor<T>(rows, cols);
    e.trainable = trainable;
    return e.value;
  }

  bool has(const std::string& name) const { return map_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = map_.find(name);
    NC_REQUIRE(it != map_.end(), "unknown parameter '" << name << "'");
    return it->second.value;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    NC_REQUIRE(it != map_.end(), "unknown parameter '" << name << "'");
    return it->second.value;
  }

  bool trainable(const std::string& name) const {
    auto it = map_.find(name);
    NC_REQUIRE(it != map_.end(), "unknown parameter '" << name << "'");
    return it->second.trainable;
  }

  const std::vector<std::string>& names() const { return order_; }

  size_t size() const { return order_.size(); }

  int64_t num_trainable() const {
    int64_t total = 0;
    for (const auto& name : order_) {
      const Entry& e = map_.at(name);
      if (e.trainable) total += e.value.numel();
    }
    return total;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& name : order_) {
      const Entry& e = map_.at(name);
      out.add(name, e.value.rows, e.value.cols, e.trainable) = e.value.template cast<U>();
    }
    return out;
  }

  // Fills a trainable tensor with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws.
  // Draws are made in double and narrowed, so float and double models built
  // from the same seed agree to float precision.
  void init_uniform(const std::string& name, int fan_in, Rng& rng) {
    Tensor<T>& t = at(name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  void fill(const std::string& name, T value) {
    for (auto& v : at(name).data) v = value;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> map_;
};

// Imports a parameter onto a tape as a named leaf (copy; tapes never alias
// the shared parameter store). Repeated imports of one name return the same
// node, so weight sharing accumulates gradient in a single leaf.
template <typename T>
Var<T> param(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& name) {
  Var<T> existing = tape.find_named(name);
  if (existing.defined()) return existing;
  return tape.leaf(ps.at(name), tape.grad_enabled() && ps.trainable(name), name);
}

}  // namespace ncopt
