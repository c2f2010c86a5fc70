#include "doctest_torch.h"

#include <filesystem>
#include <set>

#include "lvg/common.hpp"
#include "lvg/replay.hpp"

using namespace lvg;
using namespace lvg::replay;

namespace {

nets::ArchitectureSpec small_arch(int64_t K = 2) {
    nets::ArchitectureSpec a;
    a.kind = "mlp";
    a.image_h = 4;
    a.image_w = 4;
    a.dim_z = 3;
    a.num_classes = 4;
    a.num_domains = K;
    a.gen_widths = {8};
    a.critic_widths = {8};
    a.enc_widths = {8};
    a.task_widths = {4};
    a.cls_widths = {8};
    return a;
}

std::multiset<uint64_t> row_hashes(const torch::Tensor& x) {
    std::multiset<uint64_t> out;
    auto c = x.contiguous();
    const int64_t bytes = c.numel() / c.size(0) * c.element_size();
    const char* p = static_cast<const char*>(c.data_ptr());
    for (int64_t i = 0; i < c.size(0); ++i) out.insert(fnv1a(p + i * bytes, bytes));
    return out;
}

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("snapshots are immutable under later trainer updates") {
    auto bundle = nets::ModelBundle::make(small_arch(), 1);
    auto prior = latent::PriorConfig::make(3, 4, 2);
    auto snap = build_snapshot(bundle, prior, 1);
    auto before = sample_replay(snap, 16, 99);

    {
        torch::NoGradGuard ng;
        for (auto& p : bundle.generator->parameters()) p.add_(1.0);
    }
    auto after = sample_replay(snap, 16, 99);
    CHECK(tensor_content_hash(before.x) == tensor_content_hash(after.x));
    CHECK(torch::equal(before.x, after.x));
    CHECK(torch::equal(before.codes.z, after.codes.z));
}

TEST_CASE("snapshot task counts are monotone and distinct") {
    auto bundle = nets::ModelBundle::make(small_arch(), 2);
    auto prior = latent::PriorConfig::make(3, 4, 2);
    auto s1 = build_snapshot(bundle, prior, 1);
    auto s2 = build_snapshot(bundle, prior, 2);
    CHECK(s1.task_count == 1);
    CHECK(s2.task_count == 2);
    CHECK(s1.generator.get() != s2.generator.get());
    CHECK_THROWS(build_snapshot(bundle, prior, 0));
}

TEST_CASE("snapshot round-trips through serialization bit-exact") {
    auto bundle = nets::ModelBundle::make(small_arch(), 3);
    auto prior = latent::PriorConfig::make(3, 4, 2);
    prior.domain_probs = {0.25, 0.75};
    prior.empirical_task_probs = {0.25, 0.75};
    auto snap = build_snapshot(bundle, prior, 2);

    auto dir = std::filesystem::temp_directory_path() / "lvg_snap_test";
    std::filesystem::remove_all(dir);
    save_snapshot(snap, dir);
    auto loaded = load_snapshot(dir);
    CHECK(loaded.task_count == 2);
    CHECK(loaded.prior.domain_probs == prior.domain_probs);

    auto a = sample_replay(snap, 8, 7);
    auto b = sample_replay(loaded, 8, 7);
    CHECK(torch::equal(a.x, b.x));
    CHECK(torch::equal(a.codes.a, b.codes.a));
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample_replay: determinism, shape, domain marginal") {
    auto bundle = nets::ModelBundle::make(small_arch(), 4);
    auto prior = latent::PriorConfig::make(3, 4, 2);
    prior.domain_probs = {0.3, 0.7};
    prior.empirical_task_probs = {0.3, 0.7};
    auto snap = build_snapshot(bundle, prior, 2);

    auto d1 = sample_replay(snap, 32, 5);
    auto d2 = sample_replay(snap, 32, 5);
    CHECK(torch::equal(d1.x, d2.x));

    auto one = sample_replay(snap, 1, 6);
    CHECK(one.x.sizes() == torch::IntArrayRef({1, 1, 4, 4}));
    CHECK(one.x.min().item<double>() >= 0.0);
    CHECK(one.x.max().item<double>() <= 1.0);

    auto big = sample_replay(snap, 100000, 8);
    auto marginal = big.codes.a.mean(0);
    CHECK(std::abs(marginal[0].item<double>() - 0.3) < 0.01);
    CHECK(std::abs(marginal[1].item<double>() - 0.7) < 0.01);
}

TEST_CASE("mix_batches: degenerate ratios and the counting identity") {
    auto gen = cpu_generator(11);
    losses::SourceBatch real{torch::rand({128, 1, 4, 4}, gen, torch::kFloat32), {}, {}};
    losses::SourceBatch rep{torch::rand({128, 1, 4, 4}, gen, torch::kFloat32), {}, {}};

    auto all_real = mix_batches(real, rep, {128, 0.0, 1});
    CHECK(all_real.size() == 128);
    CHECK(all_real.is_replay.sum().item<int64_t>() == 0);
    CHECK(row_hashes(all_real.x) == row_hashes(real.x));

    auto all_rep = mix_batches(real, rep, {128, 1.0, 2});
    CHECK(all_rep.is_replay.sum().item<int64_t>() == 128);
    CHECK(row_hashes(all_rep.x) == row_hashes(rep.x));

    auto half = mix_batches(real, rep, {128, 0.5, 3});
    CHECK(half.is_replay.sum().item<int64_t>() == 64);
    auto expected = row_hashes(real.x.slice(0, 0, 64));
    for (auto h : row_hashes(rep.x.slice(0, 0, 64))) expected.insert(h);
    CHECK(row_hashes(half.x) == expected);

    CHECK_THROWS(mix_batches({}, {}, {8, 0.5, 4}));
}

TEST_CASE("mix_batches provenance splits recover the sources") {
    auto gen = cpu_generator(13);
    losses::SourceBatch real{torch::rand({10, 1, 4, 4}, gen), torch::rand({10, 4}, gen),
                             torch::rand({10, 2}, gen)};
    losses::SourceBatch rep{torch::rand({10, 1, 4, 4}, gen), torch::rand({10, 4}, gen),
                            torch::rand({10, 2}, gen)};
    auto mixed = mix_batches(real, rep, {10, 0.4, 5});
    auto r = mixed.real_part();
    auto p = mixed.replay_part();
    CHECK(r.size() == 6);
    CHECK(p.size() == 4);
    CHECK(row_hashes(r.x) == row_hashes(real.x.slice(0, 0, 6)));
    CHECK(row_hashes(p.x) == row_hashes(rep.x.slice(0, 0, 4)));
    CHECK(r.y.defined());
    CHECK(p.a.defined());
}

TEST_CASE("pseudo labels are the hardened generation codes") {
    latent::LatentTriple codes;
    codes.z = torch::zeros({3, 2});
    codes.c = torch::tensor({{0.0f, 1.0f, 0.0f}, {0.8f, 0.1f, 0.1f}, {0.2f, 0.3f, 0.5f}});
    codes.a = torch::ones({3, 1});
    auto labels = pseudo_label(codes);
    CHECK(torch::equal(labels.argmax(1), torch::tensor({1L, 0L, 2L})));

    latent::LatentTriple unsup;
    unsup.z = torch::zeros({3, 2});
    unsup.a = torch::ones({3, 1});
    CHECK_THROWS(pseudo_label(unsup));
}

TEST_CASE("pseudo-label marginal matches the class prior") {
    auto bundle = nets::ModelBundle::make(small_arch(1), 21);
    auto prior = latent::PriorConfig::make(3, 4, 1);
    auto snap = build_snapshot(bundle, prior, 1);
    auto draw = sample_replay(snap, 100000, 17);
    auto freq = pseudo_label(draw.codes).mean(0);
    for (int64_t k = 0; k < 4; ++k)
        CHECK(std::abs(freq[k].item<double>() - 0.25) < 0.01);
}

TEST_CASE("replay batch spec validation") {
    ReplayBatchSpec bad{8, 1.5, 0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ReplayBatchSpec neg{0, 0.5, 0};
    CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

}  // TEST_SUITE
