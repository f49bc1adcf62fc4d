// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kvunion/errors.hpp"

namespace kvunion {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major float32 tensor. Values are checked finite at construction.
class TensorF32 {
public:
    TensorF32() = default;

    explicit TensorF32(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

    TensorF32(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        KVUNION_CHECK(shape_numel(shape_) == data_.size(), ShapeError,
                      "tensor: shape " + shape_str(shape_) + " does not match data length " +
                          std::to_string(data_.size()));
        for (float x : data_) {
            KVUNION_CHECK(std::isfinite(x), ValidationError, "tensor: non-finite value on construction");
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        KVUNION_CHECK(idx.size() == shape_.size(), ShapeError, "tensor: index rank mismatch");
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            KVUNION_CHECK(i < shape_[axis], IndexError, "tensor: index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    float& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    float at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    /// Contiguous innermost row addressed by all leading indices.
    std::span<float> row(std::initializer_list<std::size_t> lead) {
        return {data_.data() + lead_offset(lead), shape_.back()};
    }
    std::span<const float> row(std::initializer_list<std::size_t> lead) const {
        return {data_.data() + lead_offset(lead), shape_.back()};
    }

    bool operator==(const TensorF32&) const = default;

private:
    std::size_t lead_offset(std::initializer_list<std::size_t> lead) const {
        KVUNION_CHECK(lead.size() + 1 == shape_.size(), ShapeError, "tensor: row index rank mismatch");
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : lead) {
            KVUNION_CHECK(i < shape_[axis], IndexError, "tensor: row index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off * shape_.back();
    }

    Shape shape_;
    std::vector<float> data_;
};

inline float max_abs_diff(const TensorF32& a, const TensorF32& b) {
    KVUNION_CHECK(a.shape() == b.shape(), ShapeError,
                  "max_abs_diff: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    float m = 0.0f;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
    return m;
}

}  // namespace kvunion
