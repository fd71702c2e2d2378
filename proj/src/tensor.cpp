#include "tspike/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tspike/error.hpp"

namespace tspike {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("shape " + shape_str(shape_) + " does not match element count " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = value;
    return t;
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    int64_t flat = 0;
    size_t i = 0;
    for (int64_t ix : idx) {
        flat = flat * shape_[i] + ix;
        ++i;
    }
    return data_[static_cast<size_t>(flat)];
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'P', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("TSPK container truncated while reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void Tensor::save(std::ostream& out) const {
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(shape_.size()));
    for (int64_t d : shape_) put_u32(out, static_cast<uint32_t>(d));
    static_assert(sizeof(float) == 4);
    static_assert(std::numeric_limits<float>::is_iec559);
    for (float v : data_) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
}

Tensor Tensor::load(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("not a TSPK container (bad magic)");
    }
    uint32_t version = get_u32(in, "version");
    if (version != kVersion) {
        throw FormatError("unsupported TSPK version " + std::to_string(version));
    }
    uint32_t rank = get_u32(in, "rank");
    if (rank > 8) throw FormatError("TSPK rank " + std::to_string(rank) + " out of range");
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(in, "dims");
    int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits = get_u32(in, "elements");
        std::memcpy(&data[static_cast<size_t>(i)], &bits, 4);
    }
    return Tensor(std::move(shape), std::move(data));
}

void Tensor::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    save(out);
    if (!out) throw Error("write failed: " + path);
}

Tensor Tensor::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load(in);
}

} // namespace tspike
