#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace rulkit {

// Dense row-major n-dimensional array of doubles; the currency of the
// autodiff engine. All computation is double precision.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool is_scalar() const { return data_.size() == 1; }

    void fill(double v);
    bool all_finite() const;

    // Same data, new shape; element count must match.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

// Named tensors: model parameters, batch-norm running stats, codebooks.
using StateDict = std::map<std::string, Tensor>;

}  // namespace rulkit
