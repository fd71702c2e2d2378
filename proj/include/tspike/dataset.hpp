#pragma once

#include <string>
#include <vector>

#include "tspike/tensor.hpp"

namespace tspike {

/// Decode an IDX file (big-endian, magic-prefixed). Image files
/// (magic 0x00000803) come back as (N,1,H,W) with pixel bytes scaled to
/// [0,1]; label vectors (magic 0x00000801) come back as (N) with the raw
/// byte values.
Tensor load_idx(const std::string& path);

/// In-memory split with images already normalized to [0,1] and then
/// standardized with per-channel statistics computed on the train split.
struct DatasetHandle {
    std::string name;
    Tensor train_images, test_images; // (N,C,H,W), standardized
    std::vector<int> train_labels, test_labels;
    int num_classes = 10;
    std::vector<float> channel_mean, channel_std; // of the [0,1] train images

    int64_t train_size() const { return train_images.empty() ? 0 : train_images.dim(0); }
    int64_t test_size() const { return test_images.empty() ? 0 : test_images.dim(0); }
};

/// MNIST-style directory: train-images-idx3-ubyte / train-labels-idx1-ubyte
/// plus either test-* or the classic t10k-* names. Fashion-MNIST ships in
/// the same format and loads through this too.
DatasetHandle load_mnist_dir(const std::string& dir, const std::string& name = "mnist");

/// CIFAR-10 binary format: each record is 1 label byte + 3072 pixel bytes.
/// Loads data_batch_1..5.bin as train and test_batch.bin as test.
DatasetHandle load_cifar10_dir(const std::string& dir);

/// First `train_count`/`test_count` samples of an existing handle.
DatasetHandle dataset_subset(const DatasetHandle& d, int64_t train_count, int64_t test_count);

/// Build a handle directly from tensors (tests, synthetic data). Images are
/// taken as already in [0,1]; standardization is applied like the loaders do.
DatasetHandle make_dataset(std::string name, Tensor train_images, std::vector<int> train_labels,
                           Tensor test_images, std::vector<int> test_labels, int num_classes);

} // namespace tspike
