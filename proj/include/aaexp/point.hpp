#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace aaexp {

// A d-dimensional covariate vector.
using Covariate = std::vector<double>;
// Read-only view of a covariate.
using Point = std::span<const double>;

// Row-major batch of covariates sharing one dimension.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {}
  PointSet(std::size_t dim, std::size_t n) : dim_(dim), data_(dim * n) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const noexcept { return data_.empty(); }

  Point operator[](std::size_t i) const {
    assert(i < size());
    return {data_.data() + i * dim_, dim_};
  }
  std::span<double> mutable_row(std::size_t i) {
    return {data_.data() + i * dim_, dim_};
  }

  void push_back(Point x) {
    assert(x.size() == dim_);
    data_.insert(data_.end(), x.begin(), x.end());
  }
  void reserve(std::size_t n) { data_.reserve(n * dim_); }
  void clear() { data_.clear(); }

  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const PointSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

}  // namespace aaexp
