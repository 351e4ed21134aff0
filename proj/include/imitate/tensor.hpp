#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace imitate {

/// Allocator that default-initializes (i.e. leaves doubles uninitialized)
/// so hot paths can allocate without a redundant zero-fill pass.
template <typename T>
struct uninit_allocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = uninit_allocator<U>;
    };
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using DoubleBuffer = std::vector<double, uninit_allocator<double>>;

/// Dense row-major tensor of doubles. Rank is at most 3 in practice
/// ({H,W} images, {H,W,C} feature maps, {K,F} conv kernels).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, double fill);
    Tensor(std::vector<int> shape, std::vector<double> data);

    /// Uninitialized allocation for buffers that are fully overwritten.
    static Tensor uninit(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    void fill(double v);
    /// Reinterpret shape; element count must match.
    Tensor reshaped(std::vector<int> shape) const;

    double sum() const;
    double min() const;
    double max() const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    DoubleBuffer data_;
};

size_t shape_numel(const std::vector<int>& shape);

/// Throws std::invalid_argument with `msg` when `cond` is false.
void require(bool cond, const std::string& msg);

}  // namespace imitate
