#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace svgpkan {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

i64 numel(const Shape& s);
std::string shape_str(const Shape& s);
Shape contiguous_strides(const Shape& s);

// Dense row-major tensor of doubles. Copies share the buffer; buffers are
// treated as immutable once handed to an op, so sharing is safe. The node id
// ties a value to the tape that produced it (-1 = detached constant).
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor zeros_like(const Tensor& t) { return zeros(t.shape()); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    i64 dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    i64 size() const { return data_ ? static_cast<i64>(data_->size()) : 0; }

    const double* data() const { return data_->data(); }
    // Copy-on-write escape hatch for optimizer updates; never call on a
    // tensor that is still reachable from a live tape.
    double* mutable_data();

    double item() const;
    double at(i64 flat) const { return (*data_)[static_cast<size_t>(flat)]; }
    const std::vector<double>& vec() const { return *data_; }

    int node() const { return node_; }
    bool attached() const { return node_ >= 0; }
    void set_node(int n) { node_ = n; }
    Tensor detached() const;

    // Same buffer, new shape; element count must match.
    Tensor reshaped(Shape shape) const;
    Tensor clone() const;

  private:
    std::shared_ptr<std::vector<double>> data_;
    Shape shape_;
    int node_ = -1;
};

}  // namespace svgpkan
