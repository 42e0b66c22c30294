#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace pyguard {

// Row-major sequence of fixed-width vectors (one row per token / timestep).
template <typename T>
class Sequence {
public:
    Sequence() = default;
    explicit Sequence(std::size_t dim) : dim_(dim) {}
    Sequence(std::size_t dim, std::vector<T> data) : dim_(dim), data_(std::move(data)) {
        assert(dim_ == 0 || data_.size() % dim_ == 0);
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const T> operator[](std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<T> operator[](std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    void push_back(std::span<const T> row) {
        assert(row.size() == dim_);
        data_.insert(data_.end(), row.begin(), row.end());
    }

    /// Rows [first, last) as a new sequence.
    Sequence slice(std::size_t first, std::size_t last) const {
        return Sequence(dim_, std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                                             data_.begin() + static_cast<std::ptrdiff_t>(last * dim_)));
    }

    const T* data() const noexcept { return data_.data(); }
    const std::vector<T>& values() const noexcept { return data_; }

    bool operator==(const Sequence&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<T> data_;
};

using FeatureSequence = Sequence<float>;

}  // namespace pyguard
