#include "doctest_torch.h"

#include <filesystem>
#include <fstream>

#include "lvg/common.hpp"
#include "lvg/data.hpp"

using namespace lvg;
using namespace lvg::data;

TEST_SUITE("data") {

TEST_CASE("synthetic tasks are deterministic and normalized") {
    auto a = make_synth_digits(200, 5);
    auto b = make_synth_digits(200, 5);
    CHECK(tensor_content_hash(a.images) == tensor_content_hash(b.images));
    CHECK(torch::equal(a.labels, b.labels));
    CHECK(a.images.min().item<float>() >= 0.0f);
    CHECK(a.images.max().item<float>() <= 1.0f);
    CHECK(a.images.sizes() == torch::IntArrayRef({200, 1, 28, 28}));

    auto c = make_synth_digits(200, 6);
    CHECK_FALSE(torch::equal(a.images, c.images));

    auto f = make_synth_fashion(200, 5);
    CHECK(f.images.sizes() == torch::IntArrayRef({200, 1, 28, 28}));
    // the two domains have clearly different intensity statistics
    CHECK(f.images.mean().item<double>() > a.images.mean().item<double>() + 0.05);
}

TEST_CASE("synthetic classes are balanced and all present") {
    auto d = make_synth_digits(1000, 7);
    auto counts = torch::zeros({10}, torch::kLong);
    for (int64_t i = 0; i < 1000; ++i) counts[d.labels[i].item<int64_t>()] += 1;
    CHECK(counts.min().item<int64_t>() == 100);
    CHECK(counts.max().item<int64_t>() == 100);
}

TEST_CASE("load_task: built-ins load, verify range, and resize") {
    LoadOptions opts;
    opts.synth_train = 300;
    opts.synth_test = 100;
    auto [train, test] = load_task("digits", opts);
    CHECK(train.size() == 300);
    CHECK(test.size() == 100);

    LoadOptions half = opts;
    half.target_h = 14;
    half.target_w = 14;
    auto [train14, test14] = load_task("digits", half);
    CHECK(train14.images.sizes() == torch::IntArrayRef({300, 1, 14, 14}));
    CHECK(train14.size() + test14.size() == 400);  // count preserved through resize

    CHECK_THROWS(load_task("no-such-task", opts));
}

TEST_CASE("load_task is deterministic") {
    LoadOptions opts;
    opts.synth_train = 100;
    opts.synth_test = 50;
    auto [tr1, te1] = load_task("fashion", opts);
    auto [tr2, te2] = load_task("fashion", opts);
    CHECK(tensor_content_hash(tr1.images) == tensor_content_hash(tr2.images));
    CHECK(tensor_content_hash(te1.images) == tensor_content_hash(te2.images));
}

TEST_CASE("dataset save/load round trip with both dtypes") {
    auto ds = make_synth_digits(50, 9);
    auto dir = std::filesystem::temp_directory_path() / "lvg_ds_test";
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    auto back = load_dataset(dir);
    CHECK(torch::equal(ds.images, back.images));
    CHECK(torch::equal(ds.labels, back.labels));
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx import parses the standard layout") {
    auto dir = std::filesystem::temp_directory_path() / "lvg_idx_test";
    std::filesystem::create_directories(dir);
    // 3 images of 2x2, labels 0,1,2
    {
        std::ofstream f(dir / "img.idx", std::ios::binary);
        const unsigned char head[] = {0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(head), sizeof(head));
        for (int i = 0; i < 12; ++i) {
            unsigned char v = static_cast<unsigned char>(i * 20);
            f.write(reinterpret_cast<const char*>(&v), 1);
        }
    }
    {
        std::ofstream f(dir / "lab.idx", std::ios::binary);
        const unsigned char head[] = {0, 0, 8, 1, 0, 0, 0, 3};
        f.write(reinterpret_cast<const char*>(head), sizeof(head));
        const unsigned char labs[] = {0, 1, 2};
        f.write(reinterpret_cast<const char*>(labs), 3);
    }
    auto ds = import_idx(dir / "img.idx", dir / "lab.idx");
    CHECK(ds.images.sizes() == torch::IntArrayRef({3, 1, 2, 2}));
    CHECK(torch::equal(ds.labels, torch::tensor({0L, 1L, 2L})));
    CHECK(ds.images[0][0][0][0].item<float>() == 0.0f);
    CHECK(std::abs(ds.images[0][0][0][1].item<float>() - 20.0f / 255.0f) < 1e-7);
    CHECK_THROWS(import_idx(dir / "lab.idx", dir / "img.idx"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("semi split: paper setting, degenerate split, near-balanced remainder") {
    auto train = make_synth_digits(5000, 11);
    auto split = make_semi_split(train, 1000, 3);
    CHECK(split.labelled.size() == 1000);
    CHECK(split.unlabelled.size() == 4000);
    auto counts = torch::zeros({10}, torch::kLong);
    for (int64_t i = 0; i < 1000; ++i) counts[split.labelled.labels[i].item<int64_t>()] += 1;
    CHECK(counts.min().item<int64_t>() == 100);  // exactly 100 per class
    CHECK(counts.max().item<int64_t>() == 100);

    auto full = make_semi_split(train, 5000, 3);
    CHECK(full.unlabelled.size() == 0);

    auto odd = make_semi_split(train, 997, 3);
    auto oc = torch::zeros({10}, torch::kLong);
    for (int64_t i = 0; i < 997; ++i) oc[odd.labelled.labels[i].item<int64_t>()] += 1;
    CHECK(oc.max().item<int64_t>() - oc.min().item<int64_t>() <= 1);

    CHECK_THROWS(make_semi_split(train, 5001, 3));
}

TEST_CASE("semi split is deterministic and disjoint") {
    auto train = make_synth_digits(500, 13);
    auto s1 = make_semi_split(train, 100, 7);
    auto s2 = make_semi_split(train, 100, 7);
    CHECK(tensor_content_hash(s1.labelled.images) == tensor_content_hash(s2.labelled.images));
    auto s3 = make_semi_split(train, 100, 8);
    CHECK(tensor_content_hash(s1.labelled.images) != tensor_content_hash(s3.labelled.images));

    std::set<uint64_t> lab_hashes;
    auto li = s1.labelled.images.contiguous();
    const int64_t bytes = 28 * 28 * sizeof(float);
    for (int64_t i = 0; i < s1.labelled.size(); ++i)
        lab_hashes.insert(fnv1a(static_cast<const char*>(li.data_ptr()) + i * bytes, bytes));
    auto ui = s1.unlabelled.images.contiguous();
    for (int64_t i = 0; i < s1.unlabelled.size(); ++i)
        CHECK_FALSE(lab_hashes.count(
            fnv1a(static_cast<const char*>(ui.data_ptr()) + i * bytes, bytes)));
}

TEST_CASE("epoch batches partition the set and respect the seed") {
    auto batches = epoch_batches(103, 16, 5);
    int64_t total = 0;
    std::set<int64_t> seen;
    for (auto& b : batches) {
        total += b.size(0);
        for (int64_t i = 0; i < b.size(0); ++i) seen.insert(b[i].item<int64_t>());
    }
    CHECK(total == 103);
    CHECK(seen.size() == 103);
    CHECK(batches.back().size(0) == 103 % 16);

    auto again = epoch_batches(103, 16, 5);
    CHECK(torch::equal(batches[0], again[0]));
    auto other = epoch_batches(103, 16, 6);
    CHECK_FALSE(torch::equal(batches[0], other[0]));

    CHECK_THROWS(epoch_batches(10, 0, 1));
}

TEST_CASE("gather produces one-hot labels and domain tags") {
    auto ds = make_synth_digits(20, 15);
    auto idx = torch::tensor({0L, 3L, 7L});
    auto b = gather(ds, idx, 10, 1, 3);
    CHECK(b.x.sizes() == torch::IntArrayRef({3, 1, 28, 28}));
    CHECK(b.y.sizes() == torch::IntArrayRef({3, 10}));
    CHECK((b.y.sum(1) - 1.0).abs().max().item<double>() == 0.0);
    CHECK(torch::equal(b.y.argmax(1), ds.labels.index_select(0, idx)));
    CHECK(b.a.sizes() == torch::IntArrayRef({3, 3}));
    CHECK(b.a.index({torch::indexing::Slice(), 1}).min().item<float>() == 1.0f);
}

}  // TEST_SUITE
