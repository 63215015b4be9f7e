#include "wavesfm/tensorcore/parameter_store.hpp"

#include <cstring>
#include <stdexcept>

namespace wavesfm::tc {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_tensor(std::uint64_t& h, const Tensor& t) {
  for (auto e : t.shape()) {
    const std::uint64_t v = e;
    fnv_bytes(h, &v, sizeof v);
  }
  fnv_bytes(h, t.data().data(), t.numel() * sizeof(double));
}

}  // namespace

Tensor& ParameterStore::add(std::string name, Tensor tensor) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!tensor.defined()) throw std::invalid_argument("undefined tensor for parameter " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

bool ParameterStore::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

Tensor& ParameterStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return entries_[it->second].tensor;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

void ParameterStore::erase(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
}

std::size_t ParameterStore::count(const std::function<bool(const Entry&)>& filter) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!filter || filter(e)) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<std::string> ParameterStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (std::string_view(e.name).substr(0, prefix.size()) == prefix) out.push_back(e.name);
  }
  return out;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy;
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone_leaf(e.tensor.requires_grad()));
  return copy;
}

std::uint64_t ParameterStore::checksum(const std::function<bool(const Entry&)>& filter) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : entries_) {
    if (filter && !filter(e)) continue;
    fnv_bytes(h, e.name.data(), e.name.size());
    fnv_tensor(h, e.tensor);
  }
  return h;
}

std::uint64_t tensor_checksum(const Tensor& t) {
  std::uint64_t h = kFnvOffset;
  fnv_tensor(h, t);
  return h;
}

}  // namespace wavesfm::tc
