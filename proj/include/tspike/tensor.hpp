#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace tspike {

/// Dense row-major float32 tensor. Immutable by convention once an op has
/// produced it; ops return fresh tensors instead of mutating inputs.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<int64_t> shape);

    Tensor(std::vector<int64_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    /// Value at (n, c, h, w) style multi-index; bounds unchecked.
    float at(std::initializer_list<int64_t> idx) const;

    /// Same data, new shape; element count must match.
    Tensor reshaped(std::vector<int64_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Flat binary container: magic "TSPK", then version, rank and dims as
    // little-endian u32, then the elements as little-endian IEEE-754 floats.
    void save(std::ostream& out) const;
    static Tensor load(std::istream& in);
    void save_file(const std::string& path) const;
    static Tensor load_file(const std::string& path);

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

/// "2x3x4" style rendering for error messages.
std::string shape_str(const std::vector<int64_t>& shape);

int64_t shape_numel(const std::vector<int64_t>& shape);

} // namespace tspike
