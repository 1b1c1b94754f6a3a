#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssga {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Storage is always double; an f32 tensor keeps every
/// element exactly representable as float (values are rounded on write).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, DType dtype = DType::f64);
    Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    DType dtype() const noexcept { return dtype_; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;
    Tensor reshaped(Shape shape) const;
    /// Rounds to float when dtype is f32.
    Tensor cast(DType dtype) const;
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    DType dtype_ = DType::f64;
    std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ssga
