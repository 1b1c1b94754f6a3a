#include "ssga/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ssga/error.hpp"

namespace ssga {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype), data_(numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
        throw config_error("tensor: " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
    if (dtype_ == DType::f32)
        for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
    if (data_.size() != 1) throw config_error("tensor: item() on shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (numel(shape) != data_.size())
        throw config_error("tensor: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::cast(DType dtype) const { return Tensor(shape_, data_, dtype); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw config_error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ssga
