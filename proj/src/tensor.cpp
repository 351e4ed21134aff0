#include "imitate/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace imitate {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative tensor dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.resize(shape_numel(shape_));
    std::fill(data_.begin(), data_.end(), 0.0);
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.resize(shape_numel(shape_));
    std::fill(data_.begin(), data_.end(), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (data.size() != shape_numel(shape_))
        throw std::invalid_argument("tensor data size does not match shape");
    data_.resize(data.size());
    std::copy(data.begin(), data.end(), data_.begin());
}

Tensor Tensor::uninit(std::vector<int> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(shape_numel(t.shape_));
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != data_.size())
        throw std::invalid_argument("reshape changes element count");
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

}  // namespace imitate
