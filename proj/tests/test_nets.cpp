#include "doctest_torch.h"

#include <filesystem>

#include "lvg/common.hpp"
#include "lvg/nets.hpp"

using namespace lvg;
using namespace lvg::nets;

namespace {

ArchitectureSpec mlp_arch(int64_t h = 2, int64_t w = 2, int64_t dim_z = 3, int64_t L = 4,
                          int64_t K = 2) {
    ArchitectureSpec a;
    a.kind = "mlp";
    a.image_h = h;
    a.image_w = w;
    a.dim_z = dim_z;
    a.num_classes = L;
    a.num_domains = K;
    a.gen_widths = {8};
    a.critic_widths = {8};
    a.enc_widths = {8};
    a.task_widths = {6};
    a.cls_widths = {8};
    return a;
}

void zero_all(torch::nn::Module& m) {
    torch::NoGradGuard ng;
    for (auto& p : m.parameters()) p.zero_();
}

void to_double(ModelBundle& b) {
    b.generator->to(torch::kFloat64);
    b.critic->to(torch::kFloat64);
    b.encoder->to(torch::kFloat64);
    b.task_head->to(torch::kFloat64);
    b.class_head->to(torch::kFloat64);
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("generator: empty batch, determinism, range") {
    for (auto kind : {"mlp", "conv"}) {
        ArchitectureSpec a = mlp_arch(28, 28);
        a.kind = kind;
        a.gen_widths = {8, 8};
        a.critic_widths = {8, 8};
        a.enc_widths = {8, 8};
        a.cls_widths = {8, 8};
        auto bundle = ModelBundle::make(a, 12);
        auto z = torch::randn({5, a.dim_z});
        auto dom = torch::zeros({5, a.num_domains});
        dom.index_put_({torch::indexing::Slice(), 0}, 1.0);
        auto c = torch::zeros({5, a.num_classes});
        c.index_put_({torch::indexing::Slice(), 1}, 1.0);

        auto x1 = generate(bundle.generator, z, dom, c);
        CHECK(x1.sizes() == torch::IntArrayRef({5, 1, 28, 28}));
        CHECK(x1.min().item<double>() >= 0.0);
        CHECK(x1.max().item<double>() <= 1.0);
        auto x2 = generate(bundle.generator, z, dom, c);
        CHECK(torch::equal(x1, x2));

        auto empty = generate(bundle.generator, torch::zeros({0, a.dim_z}),
                              torch::zeros({0, a.num_domains}),
                              torch::zeros({0, a.num_classes}));
        CHECK(empty.sizes() == torch::IntArrayRef({0, 1, 28, 28}));

        CHECK_THROWS(generate(bundle.generator, torch::randn({5, a.dim_z + 1}), dom, c));
    }
}

TEST_CASE("generator gradient w.r.t. z matches finite differences") {
    auto a = mlp_arch();
    auto bundle = ModelBundle::make(a, 3);
    to_double(bundle);
    auto z = torch::randn({2, a.dim_z}, torch::kFloat64).requires_grad_(true);
    auto dom = torch::zeros({2, a.num_domains}, torch::kFloat64);
    dom.index_put_({torch::indexing::Slice(), 0}, 1.0);
    auto c = torch::zeros({2, a.num_classes}, torch::kFloat64);
    c.index_put_({torch::indexing::Slice(), 2}, 1.0);

    auto loss = generate(bundle.generator, z, dom, c).mean();
    loss.backward();
    auto grad = z.grad().clone();
    const double h = 1e-6;
    auto base = z.detach().clone();
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < a.dim_z; ++j) {
            auto zp = base.clone();
            zp[i][j] += h;
            auto zm = base.clone();
            zm[i][j] -= h;
            const double fp = generate(bundle.generator, zp, dom, c).mean().item<double>();
            const double fm = generate(bundle.generator, zm, dom, c).mean().item<double>();
            const double fd = (fp - fm) / (2 * h);
            const double g = grad[i][j].item<double>();
            CHECK(std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8}) < 1e-3);
        }
    }
}

TEST_CASE("critic: zero network, per-sample independence") {
    auto a = mlp_arch(4, 4);
    auto bundle = ModelBundle::make(a, 5);
    zero_all(*bundle.critic);
    auto x = torch::rand({7, 1, 4, 4});
    auto s = criticize(bundle.critic, x);
    CHECK(s.abs().max().item<double>() == 0.0);

    auto bundle2 = ModelBundle::make(a, 6);
    auto scores = criticize(bundle2.critic, x);
    auto perm = torch::randperm(7, torch::kLong);
    auto scores_perm = criticize(bundle2.critic, x.index_select(0, perm));
    CHECK((scores.index_select(0, perm) - scores_perm).abs().max().item<double>() < 1e-6);
}

TEST_CASE("one-linear-layer critic with unit-norm weights has unit input gradient") {
    auto a = mlp_arch(3, 3);
    a.critic_widths = {};  // single linear map
    auto bundle = ModelBundle::make(a, 8);
    {
        torch::NoGradGuard ng;
        auto w = torch::randn({1, 9});
        bundle.critic->head->weight.copy_(w / w.norm());
        bundle.critic->head->bias.zero_();
    }
    auto x = torch::rand({6, 1, 3, 3}).requires_grad_(true);
    auto s = criticize(bundle.critic, x).sum();
    s.backward();
    auto norms = x.grad().flatten(1).norm(2, 1);
    CHECK((norms - 1.0).abs().max().item<double>() < 1e-6);
}

TEST_CASE("encoder: zero-initialized heads give mu=0 sigma=1; sigma always positive") {
    auto a = mlp_arch(4, 4);
    auto bundle = ModelBundle::make(a, 9);
    zero_all(*bundle.encoder->mu_head);
    zero_all(*bundle.encoder->log_sigma_head);
    auto [mu, sigma] = infer_z(bundle.encoder, torch::rand({5, 1, 4, 4}));
    CHECK(mu.abs().max().item<double>() == 0.0);
    CHECK((sigma - 1.0).abs().max().item<double>() == 0.0);

    auto bundle2 = ModelBundle::make(a, 10);
    auto [mu2, sigma2] = infer_z(bundle2.encoder, torch::rand({10000, 1, 4, 4}));
    CHECK(sigma2.min().item<double>() > 0.0);

    // distinct inputs generally give distinct mu on a random net
    auto xa = torch::zeros({1, 1, 4, 4});
    auto xb = torch::ones({1, 1, 4, 4});
    auto [ma, sa] = infer_z(bundle2.encoder, xa);
    auto [mb, sb] = infer_z(bundle2.encoder, xb);
    CHECK((ma - mb).abs().max().item<double>() > 1e-6);
}

TEST_CASE("task head: K=1 softmax, finite logits") {
    auto a = mlp_arch(2, 2, 3, 4, 1);
    auto bundle = ModelBundle::make(a, 11);
    auto z = torch::randn({10000, 3});
    auto logits = infer_task(bundle.task_head, z);
    CHECK(torch::isfinite(logits).all().item<bool>());
    auto sm = torch::softmax(logits, 1);
    CHECK((sm - 1.0).abs().max().item<double>() < 1e-7);
}

TEST_CASE("class head: zero logits give the uniform posterior; permutation equivariance") {
    auto a = mlp_arch(4, 4, 3, 5);
    auto bundle = ModelBundle::make(a, 13);
    zero_all(*bundle.class_head);
    auto x = torch::rand({6, 1, 4, 4});
    auto sm = torch::softmax(infer_class(bundle.class_head, x), 1);
    CHECK((sm - 0.2).abs().max().item<double>() < 1e-7);

    auto bundle2 = ModelBundle::make(a, 14);
    auto logits = infer_class(bundle2.class_head, x);
    auto perm = torch::randperm(6, torch::kLong);
    auto logits_perm = infer_class(bundle2.class_head, x.index_select(0, perm));
    CHECK((logits.index_select(0, perm) - logits_perm).abs().max().item<double>() < 1e-6);
}

TEST_CASE("class head learns separable toy blobs") {
    auto a = mlp_arch(4, 4, 3, 2);
    auto bundle = ModelBundle::make(a, 15);
    // class 0 bright upper-left, class 1 bright lower-right
    auto gen = cpu_generator(17);
    const int64_t n = 256;
    auto x = 0.05 * torch::rand({n, 1, 4, 4}, gen, torch::kFloat32);
    auto y = torch::zeros({n}, torch::kLong);
    for (int64_t i = 0; i < n; ++i) {
        if (i % 2 == 0) {
            x[i][0][0][0] = 1.0;
            x[i][0][0][1] = 1.0;
        } else {
            x[i][0][3][3] = 1.0;
            x[i][0][3][2] = 1.0;
            y[i] = 1;
        }
    }
    auto target = torch::zeros({n, 2});
    target.scatter_(1, y.view({-1, 1}), 1.0);
    torch::optim::Adam opt(bundle.class_head->parameters(), 1e-2);
    for (int step = 0; step < 150; ++step) {
        opt.zero_grad();
        auto logits = infer_class(bundle.class_head, x);
        auto loss = -(target * torch::log_softmax(logits, 1)).sum(1).mean();
        loss.backward();
        opt.step();
    }
    auto acc =
        (infer_class(bundle.class_head, x).argmax(1) == y).to(torch::kFloat64).mean().item<double>();
    CHECK(acc >= 0.99);
}

TEST_CASE("checkpoint round-trips bit-exact") {
    auto a = mlp_arch(4, 4);
    auto bundle = ModelBundle::make(a, 21);
    auto dir = std::filesystem::temp_directory_path() / "lvg_ckpt_test";
    std::filesystem::remove_all(dir);
    save_bundle(bundle, dir);
    auto loaded = load_bundle(dir);
    auto pa = bundle.all_parameters();
    auto pb = loaded.all_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(tensor_content_hash(pa[i]) == tensor_content_hash(pb[i]));
        CHECK(torch::equal(pa[i], pb[i]));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("clone is deep") {
    auto a = mlp_arch();
    auto bundle = ModelBundle::make(a, 22);
    auto copy = bundle.clone();
    {
        torch::NoGradGuard ng;
        bundle.generator->parameters()[0].add_(1.0);
    }
    CHECK_FALSE(torch::equal(bundle.generator->parameters()[0], copy.generator->parameters()[0]));
}

TEST_CASE("conv arch rejects bad shapes") {
    ArchitectureSpec a;
    a.kind = "conv";
    a.image_h = 7;
    a.image_w = 7;
    CHECK_THROWS_AS(a.validate(), std::invalid_argument);
    ArchitectureSpec b;
    b.dim_z = 0;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

}  // TEST_SUITE
