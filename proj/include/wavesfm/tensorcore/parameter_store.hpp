#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wavesfm/tensorcore/tensor.hpp"

namespace wavesfm::tc {

// Insertion-ordered map of dot-separated names to parameter tensors.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor& add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  void erase(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t count(const std::function<bool(const Entry&)>& filter = {}) const;
  void zero_grad();
  // Entries whose name begins with `prefix`, in store order.
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;

  // Deep copy: independent leaf tensors with the same values and flags.
  ParameterStore clone() const;
  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t checksum(const std::function<bool(const Entry&)>& filter = {}) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::uint64_t tensor_checksum(const Tensor& t);

}  // namespace wavesfm::tc
