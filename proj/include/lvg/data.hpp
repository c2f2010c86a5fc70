#ifndef LVG_DATA_HPP
#define LVG_DATA_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/losses.hpp"

namespace lvg::data {

struct Dataset {
    torch::Tensor images;  // [n, c, h, w] float32 in [0, 1]
    torch::Tensor labels;  // [n] int64
    int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

struct TaskSpec {
    std::string name;
    Dataset train;
    Dataset test;
    int64_t label_arity = 10;
};

struct TaskStream {
    std::vector<TaskSpec> tasks;
    int64_t image_h = 28, image_w = 28, image_c = 1;
};

struct SemiSplit {
    Dataset labelled;    // class-balanced (counts differ by <= 1)
    Dataset unlabelled;  // the remainder, disjoint from labelled
    uint64_t seed = 0;
};

struct LoadOptions {
    int64_t target_h = 28;
    int64_t target_w = 28;
    int64_t synth_train = 5000;
    int64_t synth_test = 1000;
    uint64_t synth_seed = 77;
    bool normalize = true;  // scale uint8 sources into [0, 1]
    std::string data_root;  // falls back to $LVG_DATA_ROOT
};

// Built-in desk-scale tasks: 10-class 28x28 grayscale, rendered procedurally
// and fully deterministic in the seed.
Dataset make_synth_digits(int64_t n, uint64_t seed);
Dataset make_synth_fashion(int64_t n, uint64_t seed);

// Resolves a task by name or directory: an on-disk dataset directory
// (images.bin/labels.bin + manifest.json per split) or a built-in synthetic
// source ("digits"/"mnist", "fashion"). Verifies train/test disjointness by
// content hash and resizes to the target shape.
std::pair<Dataset, Dataset> load_task(const std::string& name_or_dir, const LoadOptions& opts);

TaskStream make_stream(const std::vector<std::string>& names, const LoadOptions& opts);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// IDX image/label archives (the common small-image format), plain or gzipped.
Dataset import_idx(const std::filesystem::path& images_file,
                   const std::filesystem::path& labels_file);

Dataset resize_dataset(const Dataset& ds, int64_t h, int64_t w);

SemiSplit make_semi_split(const Dataset& train, int64_t n_labelled, uint64_t seed);

// Shuffled index batches covering the whole set once; the last partial batch
// is kept.
std::vector<torch::Tensor> epoch_batches(int64_t n, int64_t batch_size, uint64_t seed);

losses::SourceBatch gather(const Dataset& ds, const torch::Tensor& idx, int64_t label_arity,
                           int64_t domain_index, int64_t num_domains);

torch::Tensor onehot(const torch::Tensor& labels, int64_t arity);

}  // namespace lvg::data

#endif
