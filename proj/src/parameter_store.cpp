#include "madllm/parameter_store.hpp"

#include <cstring>

#include "madllm/errors.hpp"

namespace madllm {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

}  // namespace

Tensor& ParameterStore::add(std::string name, Tensor value, bool frozen) {
  if (!value.valid()) throw ContractError("parameter '" + name + "' is an empty tensor");
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(!frozen);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value), frozen});
  return entries_.back().value;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  return entries_[index_of(name)].value;
}

Tensor& ParameterStore::get(std::string_view name) { return entries_[index_of(name)].value; }

bool ParameterStore::frozen(std::string_view name) const { return entries_[index_of(name)].frozen; }

void ParameterStore::set_frozen(std::string_view name, bool frozen) {
  Entry& e = entries_[index_of(name)];
  e.frozen = frozen;
  e.value.set_requires_grad(!frozen);
}

void ParameterStore::set_all_frozen(bool frozen) {
  for (Entry& e : entries_) {
    e.frozen = frozen;
    e.value.set_requires_grad(!frozen);
  }
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.numel();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const Entry& e : entries_) out.add(e.name, e.value.detach(), e.frozen);
  return out;
}

void ParameterStore::merge(const ParameterStore& other) {
  for (const Entry& e : other.entries_) add(e.name, e.value, e.frozen);
}

void ParameterStore::zero_grad() {
  for (Entry& e : entries_) e.value.zero_grad();
}

std::uint64_t ParameterStore::digest(const std::function<bool(const Entry&)>& include) const {
  std::uint64_t h = kFnvOffset;
  for (const Entry& e : entries_) {
    if (include && !include(e)) continue;
    fnv_bytes(h, e.name.data(), e.name.size());
    for (std::size_t d : e.value.shape()) {
      const std::uint64_t d64 = d;
      fnv_bytes(h, &d64, sizeof d64);
    }
    const unsigned char flag = e.frozen ? 1 : 0;
    fnv_bytes(h, &flag, 1);
    auto data = e.value.data();
    fnv_bytes(h, data.data(), data.size() * sizeof(double));
  }
  return h;
}

std::uint64_t ParameterStore::frozen_digest() const {
  return digest([](const Entry& e) { return e.frozen; });
}

bool bitwise_equal(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i];
    const auto& y = b.entries()[i];
    if (x.name != y.name || x.frozen != y.frozen || x.value.shape() != y.value.shape()) return false;
    auto dx = x.value.data();
    auto dy = y.value.data();
    if (std::memcmp(dx.data(), dy.data(), dx.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace madllm
