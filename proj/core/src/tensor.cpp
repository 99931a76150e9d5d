#include "rulkit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "rulkit/errors.hpp"

namespace rulkit {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    for (std::size_t d : shape_)
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_str() + " does not match value count " +
                         std::to_string(data_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("reshape to incompatible element count");
    return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

}  // namespace rulkit
