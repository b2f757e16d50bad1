#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossvae {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowMatMap = Eigen::Map<RowMat<Scalar>>;

template <typename Scalar>
using ConstRowMatMap = Eigen::Map<const RowMat<Scalar>>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by layer ops when an activation or gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_shape(const char* what, const Shape& expected, const Shape& actual) {
  if (expected != actual) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) +
                     ", got " + shape_string(actual));
  }
}

/// Dense row-major tensor. The last dimension is contiguous.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Vec<Scalar> values;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), values(Vec<Scalar>::Zero(shape_size(shape))) {}
  Tensor(Shape s, Vec<Scalar> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_size(shape)) {
      throw ShapeError("tensor " + shape_string(shape) + " constructed with " +
                       std::to_string(values.size()) + " values");
    }
  }

  Index size() const { return values.size(); }
  Index dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  Scalar* data() { return values.data(); }
  const Scalar* data() const { return values.data(); }

  Scalar& operator[](Index i) { return values[i]; }
  Scalar operator[](Index i) const { return values[i]; }

  /// View as (dim0) x (product of remaining dims).
  RowMatMap<Scalar> matrix() { return {values.data(), shape.at(0), size() / shape.at(0)}; }
  ConstRowMatMap<Scalar> matrix() const {
    return {values.data(), shape.at(0), size() / shape.at(0)};
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, values.template cast<Other>());
  }

  bool all_finite() const { return values.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
  }
};

/// Named parameter tensors with paired gradient storage. Entries keep
/// insertion order; the name index is for lookup only.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
  };

  std::size_t add(const std::string& name, const Shape& shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor<Scalar>(shape), Tensor<Scalar>(shape)});
    return entries_.size() - 1;
  }

  std::size_t slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }

  Entry& entry(std::size_t slot) { return entries_.at(slot); }
  const Entry& entry(std::size_t slot) const { return entries_.at(slot); }
  Entry& operator[](const std::string& name) { return entries_[slot(name)]; }
  const Entry& operator[](const std::string& name) const { return entries_[slot(name)]; }

  const Tensor<Scalar>& value(std::size_t slot) const { return entries_[slot].value; }
  Tensor<Scalar>& value(std::size_t slot) { return entries_[slot].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.values.setZero();
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries_) {
      const std::size_t s = out.add(e.name, e.value.shape);
      out.entry(s).value = e.value.template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient buffer laid out slot-for-slot like a ParamStore. Used per worker
/// so gradient accumulation never touches the shared store concurrently.
template <typename Scalar>
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore<Scalar>& params) {
    grads_.reserve(params.size());
    for (const auto& e : params) grads_.push_back(Vec<Scalar>::Zero(e.value.size()));
  }

  Vec<Scalar>& operator[](std::size_t slot) { return grads_[slot]; }
  const Vec<Scalar>& operator[](std::size_t slot) const { return grads_[slot]; }
  std::size_t size() const { return grads_.size(); }

  void set_zero() {
    for (auto& g : grads_) g.setZero();
  }

  void add_into(ParamStore<Scalar>& params) const {
    for (std::size_t s = 0; s < grads_.size(); ++s) params.entry(s).grad.values += grads_[s];
  }

 private:
  std::vector<Vec<Scalar>> grads_;
};

}  // namespace crossvae
