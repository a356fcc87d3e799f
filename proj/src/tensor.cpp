#include "svgpkan/tensor.hpp"

#include <sstream>

namespace svgpkan {

i64 numel(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Shape contiguous_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
    for (i64 d : shape)
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(numel(t.shape_)), v);
    return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (numel(shape) != static_cast<i64>(data.size()))
        throw ShapeError("from_data: " + shape_str(shape) + " wants " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(data));
    return t;
}

double* Tensor::mutable_data() {
    if (!data_) throw std::runtime_error("mutable_data on undefined tensor");
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
    return data_->data();
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.node_ = -1;
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (numel(shape) != size())
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + ": element count mismatch");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    t.node_ = -1;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

}  // namespace svgpkan
