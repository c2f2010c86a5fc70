#include "doctest_torch.h"

#include "lvg/common.hpp"
#include "lvg/latent.hpp"
#include "lvg/nets.hpp"

using namespace lvg;
using namespace lvg::latent;

namespace {

nets::ArchitectureSpec tiny_arch(int64_t dim_z = 3, int64_t L = 4, int64_t K = 1) {
    nets::ArchitectureSpec a;
    a.kind = "mlp";
    a.image_h = 2;
    a.image_w = 2;
    a.dim_z = dim_z;
    a.num_classes = L;
    a.num_domains = K;
    a.gen_widths = {6};
    a.critic_widths = {6};
    a.enc_widths = {6};
    a.task_widths = {5};
    a.cls_widths = {6};
    return a;
}

double row_entropy_mean(const torch::Tensor& rows) {
    auto p = rows.clamp_min(1e-12);
    return -(p * p.log()).sum(1).mean().item<double>();
}

}  // namespace

TEST_SUITE("latent") {

TEST_CASE("continuous prior moments match N(0, I)") {
    auto cfg = PriorConfig::make(4, 10);
    auto z = sample_continuous_prior(100000, cfg, 42);
    REQUIRE(z.sizes() == torch::IntArrayRef({100000, 4}));
    auto mean = z.mean(0);
    auto var = z.var(0);
    for (int64_t d = 0; d < 4; ++d) {
        CHECK(std::abs(mean[d].item<double>()) < 0.02);
        CHECK(std::abs(var[d].item<double>() - 1.0) < 0.03);
    }
}

TEST_CASE("continuous prior is deterministic under a fixed seed") {
    auto cfg = PriorConfig::make(5, 10);
    auto a = sample_continuous_prior(1, cfg, 7);
    auto b = sample_continuous_prior(1, cfg, 7);
    CHECK(torch::equal(a, b));
    auto c = sample_continuous_prior(1, cfg, 8);
    CHECK_FALSE(torch::equal(a, c));
}

TEST_CASE("degenerate dimension rejected") {
    PriorConfig cfg = PriorConfig::make(1, 2);
    cfg.dim_z = 0;
    CHECK_THROWS_AS(sample_continuous_prior(3, cfg, 1), std::invalid_argument);
}

TEST_CASE("categorical point mass") {
    auto rows = sample_categorical_prior(64, {1.0, 0.0, 0.0}, 5);
    CHECK(torch::equal(rows.sum(0), torch::tensor({64.0f, 0.0f, 0.0f})));
    for (int64_t i = 0; i < 64; ++i) CHECK(rows[i][0].item<float>() == 1.0f);
}

TEST_CASE("categorical frequencies converge to probs") {
    const int64_t n = 100000;
    auto rows = sample_categorical_prior(n, {0.25, 0.25, 0.25, 0.25}, 99);
    auto freq = rows.mean(0);
    for (int64_t k = 0; k < 4; ++k)
        CHECK(std::abs(freq[k].item<double>() - 0.25) < 0.01);
}

TEST_CASE("non-normalized probs rejected") {
    CHECK_THROWS_AS(sample_categorical_prior(3, {0.5, 0.5, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("reparameterize deterministic limit and moments") {
    auto mu = torch::full({4, 2}, 1.5);
    auto sigma = torch::full({4, 2}, 1e-12);
    auto pi = torch::randn({4, 2});
    auto z = reparameterize(mu, sigma, pi);
    CHECK((z - mu).abs().max().item<double>() < 1e-9);

    auto gen = cpu_generator(3);
    auto noise = torch::randn({100000, 1}, gen, torch::kFloat32);
    auto z2 = reparameterize(torch::zeros({100000, 1}), torch::ones({100000, 1}), noise);
    CHECK(std::abs(z2.var().item<double>() - 1.0) < 0.03);

    CHECK_THROWS(reparameterize(mu, torch::zeros({4, 2}) - 1.0, pi));
}

TEST_CASE("reparameterize gradient w.r.t. mu is 1 (finite differences)") {
    const double h = 1e-6;
    auto pi = torch::randn({1, 1}, torch::kFloat64);
    auto sigma = torch::full({1, 1}, 0.7, torch::kFloat64);
    auto f = [&](double m) {
        return reparameterize(torch::full({1, 1}, m, torch::kFloat64), sigma, pi)
            .mean()
            .item<double>();
    };
    const double fd = (f(0.3 + h) - f(0.3 - h)) / (2 * h);
    CHECK(std::abs(fd - 1.0) < 1e-5);

    auto mu = torch::full({1, 1}, 0.3, torch::TensorOptions().dtype(torch::kFloat64))
                  .requires_grad_(true);
    auto z = reparameterize(mu, sigma, pi).mean();
    z.backward();
    CHECK(std::abs(mu.grad().item<double>() - 1.0) < 1e-12);
}

TEST_CASE("gumbel rows lie on the simplex for any temperature") {
    auto logits = torch::randn({32, 5}) * 4.0;
    for (double T : {1e-2, 0.5, 1.0, 10.0, 1e3}) {
        auto draw = make_gumbel_draw(32, 5, 11);
        auto y = gumbel_softmax(logits, T, draw);
        CHECK((y.sum(1) - 1.0).abs().max().item<double>() < 1e-6);
        CHECK(y.min().item<double>() >= 0.0);
    }
}

TEST_CASE("low-temperature gumbel matches direct categorical sampling") {
    const int64_t n = 100000, k = 4;
    auto logits = torch::tensor({{0.9f, -0.3f, 0.1f, -1.2f}});
    auto probs = torch::softmax(logits, 1).squeeze(0);
    auto rep = logits.repeat({n, 1});
    auto draw = make_gumbel_draw(n, k, 1234);
    auto y = gumbel_softmax(rep, 0.01, draw);
    auto freq = harden(y).mean(0);

    // independent oracle: inverse-cdf categorical sampler over the same probs
    std::vector<double> pv(probs.data_ptr<float>(), probs.data_ptr<float>() + k);
    double sum = 0;
    for (auto& p : pv) sum += p;
    for (auto& p : pv) p /= sum;
    auto oracle_freq = sample_categorical_prior(n, pv, 4321).mean(0);

    for (int64_t j = 0; j < k; ++j) {
        CHECK(std::abs(freq[j].item<double>() - probs[j].item<double>()) < 0.02);
        CHECK(std::abs(freq[j].item<double>() - oracle_freq[j].item<double>()) < 0.02);
    }
}

TEST_CASE("high temperature smooths toward uniform") {
    const int64_t L = 5;
    auto logits = torch::zeros({2000, L});
    auto draw = make_gumbel_draw(2000, L, 9);
    auto y = gumbel_softmax(logits, 100.0, draw);
    CHECK((y - 1.0 / L).abs().max().item<double>() < 0.05);
}

TEST_CASE("entropy is monotone non-increasing in decreasing temperature") {
    const int64_t n = 10000, k = 6;
    auto logits = torch::randn({1, k}).repeat({n, 1});
    double prev = 1e9;
    int step = 0;
    for (double T : {10.0, 1.0, 0.1, 0.01}) {
        auto draw = make_gumbel_draw(n, k, 1000 + step++);
        const double ent = row_entropy_mean(gumbel_softmax(logits, T, draw));
        CHECK(ent <= prev + 1e-9);
        prev = ent;
    }
}

TEST_CASE("gumbel softmax gradients match central finite differences") {
    const int64_t k = 4;
    for (double T : {0.5, 1.0, 3.0}) {
        auto logits = torch::randn({2, k}, torch::kFloat64).requires_grad_(true);
        auto draw = make_gumbel_draw(2, k, 77, torch::kFloat64);
        auto w = torch::randn({2, k}, torch::kFloat64);
        auto loss = (gumbel_softmax(logits, T, draw) * w).sum();
        loss.backward();
        auto grad = logits.grad().clone();

        const double h = 1e-6;
        auto base = logits.detach().clone();
        for (int64_t i = 0; i < 2; ++i) {
            for (int64_t j = 0; j < k; ++j) {
                auto lp = base.clone();
                lp[i][j] += h;
                auto lm = base.clone();
                lm[i][j] -= h;
                const double fp = (gumbel_softmax(lp, T, draw) * w).sum().item<double>();
                const double fm = (gumbel_softmax(lm, T, draw) * w).sum().item<double>();
                const double fd = (fp - fm) / (2 * h);
                const double g = grad[i][j].item<double>();
                const double denom = std::max({std::abs(fd), std::abs(g), 1e-8});
                CHECK(std::abs(fd - g) / denom < 1e-3);
            }
        }
    }
}

TEST_CASE("straight-through forward is hard, gradient is relaxed") {
    auto logits = torch::randn({6, 3}, torch::kFloat64).requires_grad_(true);
    auto draw = make_gumbel_draw(6, 3, 5, torch::kFloat64);
    auto y = gumbel_softmax(logits, 0.67, draw, /*straight_through=*/true);
    auto m = std::get<0>(y.max(1));
    CHECK((m - 1.0).abs().max().item<double>() < 1e-12);
    y.sum().backward();
    // relaxed path: d(sum(y))/dlogits is zero only for the pure hard forward
    CHECK(logits.grad().defined());
}

TEST_CASE("gumbel rejects bad inputs") {
    auto logits = torch::randn({2, 3});
    auto draw = make_gumbel_draw(2, 3, 1);
    CHECK_THROWS_AS(gumbel_softmax(logits, 0.0, draw), std::invalid_argument);
    auto bad = torch::full({2, 3}, std::numeric_limits<float>::infinity());
    CHECK_THROWS(gumbel_softmax(bad, 1.0, draw));
}

TEST_CASE("harden: argmax, ties to lowest index, idempotent") {
    auto r = harden(torch::tensor({{0.1f, 0.7f, 0.2f}}));
    CHECK(torch::equal(r, torch::tensor({{0.0f, 1.0f, 0.0f}})));
    auto tie = harden(torch::tensor({{0.5f, 0.5f}}));
    CHECK(torch::equal(tie, torch::tensor({{1.0f, 0.0f}})));
    CHECK(torch::equal(harden(r), r));
}

TEST_CASE("expand_domain grows priors and preserves existing units") {
    auto arch = tiny_arch(3, 4, 1);
    auto bundle = nets::ModelBundle::make(arch, 99);
    auto cfg = PriorConfig::make(3, 4, 1);

    auto probe_z = torch::randn({16, 3});
    auto before = nets::infer_task(bundle.task_head, probe_z);

    expand_domain(cfg, bundle, 1);
    CHECK(cfg.num_domains == 2);
    CHECK(cfg.domain_probs == std::vector<double>({0.5, 0.5}));
    auto after = nets::infer_task(bundle.task_head, probe_z);
    REQUIRE(after.size(1) == 2);
    CHECK((after.slice(1, 0, 1) - before).abs().max().item<double>() < 1e-7);

    expand_domain(cfg, bundle, 2);
    CHECK(cfg.num_domains == 3);
    for (double p : cfg.domain_probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
    auto after3 = nets::infer_task(bundle.task_head, probe_z);
    CHECK((after3.slice(1, 0, 2) - after).abs().max().item<double>() < 1e-7);
}

TEST_CASE("expand_domain keeps generator outputs for old codes") {
    auto arch = tiny_arch(3, 4, 1);
    auto bundle = nets::ModelBundle::make(arch, 7);
    auto cfg = PriorConfig::make(3, 4, 1);

    auto z = torch::randn({8, 3});
    auto a1 = torch::ones({8, 1});
    auto c = sample_categorical_prior(8, {0.25, 0.25, 0.25, 0.25}, 3);
    auto before = nets::generate(bundle.generator, z, a1, c);

    expand_domain(cfg, bundle, 5);
    // same codes with the appended domain column at zero
    auto a2 = torch::cat({a1, torch::zeros({8, 1})}, 1);
    auto after = nets::generate(bundle.generator, z, a2, c);
    CHECK((after - before).abs().max().item<double>() < 1e-7);
}

TEST_CASE("prior triple sampling is deterministic and unsupervised-aware") {
    auto cfg = PriorConfig::make(4, 3, 2);
    auto t1 = sample_prior_triple(10, cfg, true, 55);
    auto t2 = sample_prior_triple(10, cfg, true, 55);
    CHECK(torch::equal(t1.z, t2.z));
    CHECK(torch::equal(t1.c, t2.c));
    CHECK(torch::equal(t1.a, t2.a));
    t1.validate();
    auto u = sample_prior_triple(10, cfg, false, 55);
    CHECK_FALSE(u.c.defined());
}

}  // TEST_SUITE
