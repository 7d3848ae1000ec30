#include "beat/param_vector.hpp"

#include <cstdio>

#include "beat/error.hpp"

namespace beat {

void Fnv1a::update(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
  return buf;
}

void ParamVector::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter block '" + name + "'");
  blocks_.push_back({std::move(name), std::move(value)});
}

bool ParamVector::contains(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return true;
  return false;
}

const Tensor& ParamVector::get(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b.value;
  throw ConfigError("no parameter block '" + name + "'");
}

Tensor& ParamVector::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamVector::scalar_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.value.size();
  return n;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& b : blocks_) flat.insert(flat.end(), b.value.values().begin(), b.value.values().end());
  return flat;
}

void ParamVector::assign_flat(const std::vector<double>& flat) {
  if (flat.size() != scalar_count())
    throw ShapeError("assign_flat: expected " + std::to_string(scalar_count()) + " scalars, got " +
                     std::to_string(flat.size()));
  std::size_t off = 0;
  for (auto& b : blocks_)
    for (double& v : b.value.values()) v = flat[off++];
}

std::string ParamVector::digest() const {
  Fnv1a h;
  for (const auto& b : blocks_) {
    h.update(b.name);
    for (std::size_t d : b.value.shape()) {
      const std::uint64_t d64 = d;
      h.update(&d64, sizeof d64);
    }
    h.update(b.value.values().data(), b.value.size() * sizeof(double));
  }
  return h.hex();
}

nlohmann::json ParamVector::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_)
    blocks.push_back({{"name", b.name}, {"shape", b.value.shape()}, {"data", b.value.values()}});
  return {{"version", kFormatVersion}, {"blocks", std::move(blocks)}};
}

ParamVector ParamVector::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != kFormatVersion)
      throw ConfigError("unsupported parameter format version " + doc.at("version").dump());
    ParamVector pv;
    for (const auto& b : doc.at("blocks")) {
      Shape shape = b.at("shape").get<Shape>();
      std::vector<double> data = b.at("data").get<std::vector<double>>();
      pv.add(b.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    return pv;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed parameter document: ") + e.what());
  }
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  if (a.blocks_.size() != b.blocks_.size()) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i)
    if (a.blocks_[i].name != b.blocks_[i].name || !(a.blocks_[i].value == b.blocks_[i].value))
      return false;
  return true;
}

}  // namespace beat
