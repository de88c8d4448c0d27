#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vdr/common.hpp"

namespace vdr {

// Dense row-major n-d array. The last axis is contiguous.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), T(0));
    }

    Tensor(std::vector<int64_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        assert(static_cast<int64_t>(data_.size()) == count(shape_));
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<int64_t>());
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_[i]; }
    size_t rank() const { return shape_.size(); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Indexed accessors for the common low ranks.
    T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<int64_t> shape) const {
        if (count(shape) != size()) throw DataError("reshape: element count mismatch");
        return Tensor(std::move(shape), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

}  // namespace vdr
