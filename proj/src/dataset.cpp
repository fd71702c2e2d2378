#include "tspike/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tspike/error.hpp"

namespace tspike {

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

uint32_t be32(const std::vector<unsigned char>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) {
        throw FormatError(path + ": truncated header, file ends at offset " +
                          std::to_string(b.size()) + " while reading 4 bytes at offset " +
                          std::to_string(off));
    }
    return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
           (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

} // namespace

Tensor load_idx(const std::string& path) {
    const std::vector<unsigned char> bytes = read_all(path);
    const uint32_t magic = be32(bytes, 0, path);
    if (magic == 0x00000803u) {
        const int64_t n = be32(bytes, 4, path);
        const int64_t h = be32(bytes, 8, path);
        const int64_t w = be32(bytes, 12, path);
        const size_t expected = 16 + static_cast<size_t>(n) * h * w;
        if (bytes.size() < expected) {
            throw FormatError(path + ": truncated, file ends at offset " +
                              std::to_string(bytes.size()) + ", expected " +
                              std::to_string(expected) + " bytes");
        }
        Tensor t({n, 1, h, w});
        const float inv = 1.0f / 255.0f;
        for (int64_t i = 0; i < n * h * w; ++i) {
            t[i] = static_cast<float>(bytes[16 + static_cast<size_t>(i)]) * inv;
        }
        return t;
    }
    if (magic == 0x00000801u) {
        const int64_t n = be32(bytes, 4, path);
        const size_t expected = 8 + static_cast<size_t>(n);
        if (bytes.size() < expected) {
            throw FormatError(path + ": truncated, file ends at offset " +
                              std::to_string(bytes.size()) + ", expected " +
                              std::to_string(expected) + " bytes");
        }
        Tensor t({n});
        for (int64_t i = 0; i < n; ++i) {
            t[i] = static_cast<float>(bytes[8 + static_cast<size_t>(i)]);
        }
        return t;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw FormatError(path + ": bad IDX magic " + buf + " at offset 0 (expected 0x00000801 or 0x00000803)");
}

namespace {

std::vector<int> to_labels(const Tensor& t, int num_classes, const std::string& path) {
    std::vector<int> labels(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const int v = static_cast<int>(t[i]);
        if (v < 0 || v >= num_classes) {
            throw FormatError(path + ": label " + std::to_string(v) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        }
        labels[static_cast<size_t>(i)] = v;
    }
    return labels;
}

void standardize(DatasetHandle& d) {
    const int64_t c = d.train_images.dim(1);
    const int64_t plane = d.train_images.dim(2) * d.train_images.dim(3);
    d.channel_mean.assign(static_cast<size_t>(c), 0.0f);
    d.channel_std.assign(static_cast<size_t>(c), 1.0f);
    const int64_t n = d.train_images.dim(0);
    for (int64_t ch = 0; ch < c; ++ch) {
        double sum = 0.0, sq = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const float* p = d.train_images.data() + (i * c + ch) * plane;
            for (int64_t j = 0; j < plane; ++j) {
                sum += p[j];
                sq += static_cast<double>(p[j]) * p[j];
            }
        }
        const double count = static_cast<double>(n * plane);
        const double mean = sum / count;
        const double var = sq / count - mean * mean;
        d.channel_mean[static_cast<size_t>(ch)] = static_cast<float>(mean);
        d.channel_std[static_cast<size_t>(ch)] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    }
    auto apply = [&](Tensor& images) {
        if (images.empty()) return;
        const int64_t m = images.dim(0);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                float* p = images.data() + (i * c + ch) * plane;
                const float mu = d.channel_mean[static_cast<size_t>(ch)];
                const float inv = 1.0f / d.channel_std[static_cast<size_t>(ch)];
                for (int64_t j = 0; j < plane; ++j) p[j] = (p[j] - mu) * inv;
            }
    };
    apply(d.train_images);
    apply(d.test_images);
}

std::string pick_existing(const std::string& dir, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        const std::string p = dir + "/" + n;
        if (std::filesystem::exists(p)) return p;
    }
    std::string tried;
    for (const char* n : names) tried += std::string(n) + " ";
    throw Error("no dataset file in " + dir + " (tried: " + tried + ")");
}

} // namespace

DatasetHandle load_mnist_dir(const std::string& dir, const std::string& name) {
    DatasetHandle d;
    d.name = name;
    d.num_classes = 10;
    const std::string tri = pick_existing(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
    const std::string trl = pick_existing(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
    const std::string tei = pick_existing(dir, {"test-images-idx3-ubyte", "t10k-images-idx3-ubyte",
                                                "t10k-images.idx3-ubyte"});
    const std::string tel = pick_existing(dir, {"test-labels-idx1-ubyte", "t10k-labels-idx1-ubyte",
                                                "t10k-labels.idx1-ubyte"});
    d.train_images = load_idx(tri);
    d.train_labels = to_labels(load_idx(trl), 10, trl);
    d.test_images = load_idx(tei);
    d.test_labels = to_labels(load_idx(tel), 10, tel);
    if (d.train_images.dim(0) != static_cast<int64_t>(d.train_labels.size())) {
        throw FormatError(dir + ": train split has " + std::to_string(d.train_images.dim(0)) +
                          " images but " + std::to_string(d.train_labels.size()) + " labels");
    }
    if (d.test_images.dim(0) != static_cast<int64_t>(d.test_labels.size())) {
        throw FormatError(dir + ": test split has " + std::to_string(d.test_images.dim(0)) +
                          " images but " + std::to_string(d.test_labels.size()) + " labels");
    }
    standardize(d);
    return d;
}

namespace {

void read_cifar_file(const std::string& path, std::vector<float>& pixels, std::vector<int>& labels) {
    const std::vector<unsigned char> bytes = read_all(path);
    constexpr size_t kRecord = 3073; // 1 label byte + 3*1024 pixels
    if (bytes.size() % kRecord != 0) {
        throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of the 3073-byte record (file ends mid-record at offset " +
                          std::to_string((bytes.size() / kRecord) * kRecord) + ")");
    }
    const size_t n = bytes.size() / kRecord;
    const float inv = 1.0f / 255.0f;
    for (size_t r = 0; r < n; ++r) {
        const unsigned char* rec = bytes.data() + r * kRecord;
        if (rec[0] > 9) {
            throw FormatError(path + ": label " + std::to_string(rec[0]) + " at offset " +
                              std::to_string(r * kRecord) + " outside [0,10)");
        }
        labels.push_back(rec[0]);
        for (size_t i = 0; i < 3072; ++i) pixels.push_back(static_cast<float>(rec[1 + i]) * inv);
    }
}

} // namespace

DatasetHandle load_cifar10_dir(const std::string& dir) {
    DatasetHandle d;
    d.name = "cifar10";
    d.num_classes = 10;
    std::vector<float> train_px, test_px;
    for (int i = 1; i <= 5; ++i) {
        read_cifar_file(dir + "/data_batch_" + std::to_string(i) + ".bin", train_px, d.train_labels);
    }
    read_cifar_file(dir + "/test_batch.bin", test_px, d.test_labels);
    const int64_t ntr = static_cast<int64_t>(d.train_labels.size());
    const int64_t nte = static_cast<int64_t>(d.test_labels.size());
    d.train_images = Tensor({ntr, 3, 32, 32}, std::move(train_px));
    d.test_images = Tensor({nte, 3, 32, 32}, std::move(test_px));
    standardize(d);
    return d;
}

DatasetHandle dataset_subset(const DatasetHandle& d, int64_t train_count, int64_t test_count) {
    train_count = std::min(train_count, d.train_size());
    test_count = std::min(test_count, d.test_size());
    DatasetHandle out;
    out.name = d.name + "-subset";
    out.num_classes = d.num_classes;
    out.channel_mean = d.channel_mean;
    out.channel_std = d.channel_std;
    auto take = [](const Tensor& images, int64_t count) {
        std::vector<int64_t> shape = images.shape();
        const int64_t per = images.numel() / shape[0];
        shape[0] = count;
        Tensor t(shape);
        std::copy(images.data(), images.data() + count * per, t.data());
        return t;
    };
    out.train_images = take(d.train_images, train_count);
    out.test_images = take(d.test_images, test_count);
    out.train_labels.assign(d.train_labels.begin(), d.train_labels.begin() + train_count);
    out.test_labels.assign(d.test_labels.begin(), d.test_labels.begin() + test_count);
    return out;
}

DatasetHandle make_dataset(std::string name, Tensor train_images, std::vector<int> train_labels,
                           Tensor test_images, std::vector<int> test_labels, int num_classes) {
    DatasetHandle d;
    d.name = std::move(name);
    d.train_images = std::move(train_images);
    d.train_labels = std::move(train_labels);
    d.test_images = std::move(test_images);
    d.test_labels = std::move(test_labels);
    d.num_classes = num_classes;
    standardize(d);
    return d;
}

} // namespace tspike
