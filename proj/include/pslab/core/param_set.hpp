#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pslab/core/dense.hpp"

namespace pslab {

/// Named trainable tensors with matching gradient slots, kept in insertion order.
template <typename Scalar>
class ParamSet {
 public:
  using Mat = Matrix<Scalar>;

  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    bool has_grad = false;
  };

  void add(std::string name, Mat value) {
    require(!index_.contains(name), "duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    Mat grad = Mat::Zero(value.rows(), value.cols());
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad), false});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Entry& entry(const std::string& name) { return entries_[lookup(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[lookup(name)]; }

  Mat& value(const std::string& name) { return entry(name).value; }
  const Mat& value(const std::string& name) const { return entry(name).value; }
  Mat& grad(const std::string& name) { return entry(name).grad; }
  const Mat& grad(const std::string& name) const { return entry(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) {
      e.grad.setZero();
      e.has_grad = false;
    }
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!pslab::all_finite(e.value)) return false;
    return true;
  }

  /// Name of the first parameter holding a non-finite value, or empty.
  std::string first_non_finite() const {
    for (const auto& e : entries_)
      if (!pslab::all_finite(e.value)) return e.name;
    return {};
  }

  bool operator==(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols() ||
          a.value != b.value)
        return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace pslab
