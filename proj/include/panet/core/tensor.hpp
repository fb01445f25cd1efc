#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>

#include "panet/core/common.hpp"

namespace panet {

// Dense row-major tensor. Data is shared between copies; clone() detaches.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(numel_of(shape_), fill)) {}

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor from_vector(Shape shape, std::vector<T> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (static_cast<int64_t>(values.size()) != numel_of(t.shape_))
            throw ShapeError("from_vector: value count does not match shape " + shape_str(t.shape_));
        t.data_ = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size(int64_t dim) const { return shape_.at(static_cast<size_t>(dim)); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    std::vector<T>& vec() { return *data_; }
    const std::vector<T>& vec() const { return *data_; }

    T& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // Multi-index access, mostly for tests and small utilities.
    T& at(std::initializer_list<int64_t> idx) { return (*data_)[flat_index(idx)]; }
    const T& at(std::initializer_list<int64_t> idx) const { return (*data_)[flat_index(idx)]; }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        if (data_) t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    // Shares storage under a different shape.
    Tensor reshape(Shape shape) const {
        if (numel_of(shape) != numel())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

    bool all_finite() const {
        for (const T& v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>((*data_)[static_cast<size_t>(i)]);
        return t;
    }

  private:
    int64_t flat_index(std::initializer_list<int64_t> idx) const {
        int64_t flat = 0;
        size_t d = 0;
        for (int64_t i : idx) {
            flat = flat * shape_[d] + i;
            ++d;
        }
        return flat;
    }

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

using FTensor = Tensor<float>;
using DTensor = Tensor<double>;
using U8Tensor = Tensor<uint8_t>;

}  // namespace panet
