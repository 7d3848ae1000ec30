#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beat/tensor.hpp"

namespace beat {

struct ParamBlock {
  std::string name;
  Tensor value;
};

// Ordered set of named parameter tensors.
class ParamVector {
 public:
  static constexpr int kFormatVersion = 1;

  ParamVector() = default;

  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  std::vector<ParamBlock>& blocks() noexcept { return blocks_; }
  std::size_t scalar_count() const;

  // Flat copy of every scalar in block order, and its inverse.
  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& flat);

  // 64-bit FNV-1a over names, shapes and raw IEEE-754 bytes, as 16 hex digits.
  std::string digest() const;

  nlohmann::json to_json() const;
  static ParamVector from_json(const nlohmann::json& doc);

  friend bool operator==(const ParamVector&, const ParamVector&);

 private:
  std::vector<ParamBlock> blocks_;
};

bool operator==(const ParamVector& a, const ParamVector& b);

// FNV-1a helper shared with other digests.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t value() const noexcept { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace beat
