#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "madllm/tensor.hpp"

namespace madllm {

// Named parameter tensors with per-tensor freeze flags. A frozen tensor never
// requires grad; the flag and requires_grad are kept in sync by set_frozen().
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool frozen = false;
  };

  Tensor& add(std::string name, Tensor value, bool frozen = false);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  bool frozen(std::string_view name) const;
  void set_frozen(std::string_view name, bool frozen);
  void set_all_frozen(bool frozen);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  // Deep copy: no storage is shared with the original.
  ParameterStore clone() const;
  // Appends every entry of other, sharing storage. Names must not collide.
  void merge(const ParameterStore& other);
  void zero_grad();

  // FNV-1a over (name, shape, frozen flag, raw float64 bytes) of the
  // selected entries, in insertion order.
  std::uint64_t digest(const std::function<bool(const Entry&)>& include = {}) const;
  std::uint64_t frozen_digest() const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// True when both stores hold the same names, shapes, flags and bitwise-equal values.
bool bitwise_equal(const ParameterStore& a, const ParameterStore& b);

}  // namespace madllm
