#include "lvg/latent.hpp"

#include <cmath>
#include <stdexcept>

#include "lvg/common.hpp"

namespace lvg::latent {

PriorConfig PriorConfig::make(int64_t dim_z, int64_t num_classes, int64_t num_domains,
                              double temperature) {
    PriorConfig cfg;
    cfg.dim_z = dim_z;
    cfg.num_classes = num_classes;
    cfg.num_domains = num_domains;
    cfg.temperature = temperature;
    cfg.domain_probs.assign(num_domains, 1.0 / static_cast<double>(num_domains));
    cfg.class_probs.assign(num_classes, 1.0 / static_cast<double>(num_classes));
    cfg.empirical_task_probs = cfg.domain_probs;
    cfg.validate();
    return cfg;
}

void validate_probs(const std::vector<double>& probs, const char* what) {
    if (probs.empty()) throw std::invalid_argument(std::string(what) + ": empty");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

void PriorConfig::validate() const {
    if (dim_z < 1) throw std::invalid_argument("dim_z must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    if (num_domains < 1) throw std::invalid_argument("num_domains must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    validate_probs(domain_probs, "domain_probs");
    if (static_cast<int64_t>(domain_probs.size()) != num_domains)
        throw std::invalid_argument("domain_probs length != num_domains");
    if (!class_probs.empty()) {
        validate_probs(class_probs, "class_probs");
        if (static_cast<int64_t>(class_probs.size()) != num_classes)
            throw std::invalid_argument("class_probs length != num_classes");
    }
    validate_probs(empirical_task_probs, "empirical_task_probs");
    if (static_cast<int64_t>(empirical_task_probs.size()) != num_domains)
        throw std::invalid_argument("empirical_task_probs length != num_domains");
}

void LatentTriple::validate() const {
    TORCH_CHECK(z.defined() && z.dim() == 2, "z must be [n, dim_z]");
    auto check_simplex = [&](const torch::Tensor& t, bool hard, const char* what) {
        if (!t.defined()) return;
        TORCH_CHECK(t.dim() == 2 && t.size(0) == z.size(0), what, " batch mismatch");
        if (t.size(0) == 0) return;
        auto sums = t.sum(1);
        TORCH_CHECK((sums - 1.0).abs().max().item<double>() <= 1e-6, what,
                    " rows must sum to 1");
        TORCH_CHECK(t.min().item<double>() >= -1e-9, what, " entries must be >= 0");
        if (hard) {
            auto m = t.max(1);
            TORCH_CHECK((std::get<0>(m) - 1.0).abs().max().item<double>() <= 1e-9, what,
                        " hard rows must be exactly one-hot");
        }
    };
    check_simplex(c, hard_c, "c");
    check_simplex(a, hard_a, "a");
}

GumbelDraw make_gumbel_draw(int64_t n, int64_t k, uint64_t seed, torch::Dtype dtype) {
    TORCH_CHECK(n >= 0 && k >= 1, "bad gumbel draw shape");
    auto gen = cpu_generator(seed);
    // g = -log(-log(u)), u ~ U(0,1); clamp away from {0,1} to keep g finite
    auto u = torch::rand({n, k}, gen, torch::TensorOptions().dtype(dtype))
                 .clamp(1e-12, 1.0 - 1e-7);
    return GumbelDraw{-torch::log(-torch::log(u)), seed};
}

torch::Tensor sample_continuous_prior(int64_t n, const PriorConfig& cfg, uint64_t seed) {
    cfg.validate();
    TORCH_CHECK(n >= 1, "n must be >= 1");
    auto gen = cpu_generator(seed);
    return torch::randn({n, cfg.dim_z}, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

torch::Tensor sample_categorical_prior(int64_t n, const std::vector<double>& probs,
                                       uint64_t seed) {
    validate_probs(probs, "probs");
    TORCH_CHECK(n >= 1, "n must be >= 1");
    const int64_t k = static_cast<int64_t>(probs.size());
    auto gen = cpu_generator(seed);
    auto u = torch::rand({n}, gen, torch::TensorOptions().dtype(torch::kFloat64));
    auto ua = u.accessor<double, 1>();
    auto out = torch::zeros({n, k}, torch::kFloat32);
    auto oa = out.accessor<float, 2>();
    for (int64_t i = 0; i < n; ++i) {
        double cum = 0.0;
        int64_t pick = k - 1;
        for (int64_t j = 0; j < k; ++j) {
            cum += probs[j];
            if (ua[i] < cum) {
                pick = j;
                break;
            }
        }
        oa[i][pick] = 1.0f;
    }
    return out;
}

torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& sigma,
                             const torch::Tensor& noise) {
    TORCH_CHECK(mu.sizes() == sigma.sizes() && mu.sizes() == noise.sizes(),
                "reparameterize: shape mismatch");
    TORCH_CHECK(sigma.min().item<double>() > 0.0, "sigma must be positive");
    return mu + noise * sigma;
}

torch::Tensor gumbel_softmax(const torch::Tensor& logits, double temperature,
                             const GumbelDraw& draw, bool straight_through) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    check_finite(logits, "gumbel_softmax logits");
    TORCH_CHECK(draw.g.sizes() == logits.sizes(), "gumbel draw shape mismatch");
    auto y = torch::softmax((logits + draw.g.to(logits.dtype())) / temperature, 1);
    if (straight_through) {
        auto y_hard = harden(y);
        return y_hard + y - y.detach();
    }
    return y;
}

torch::Tensor harden(const torch::Tensor& relaxed) {
    TORCH_CHECK(relaxed.dim() == 2, "harden expects [n, k]");
    const int64_t n = relaxed.size(0), k = relaxed.size(1);
    auto rows = relaxed.detach().to(torch::kFloat64).contiguous();
    auto ra = rows.accessor<double, 2>();
    auto out = torch::zeros_like(relaxed);
    auto idx = torch::zeros({n}, torch::kLong);
    auto ia = idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < n; ++i) {
        double best = ra[i][0];
        int64_t arg = 0;
        for (int64_t j = 1; j < k; ++j) {
            if (ra[i][j] > best) {  // strict: ties keep the lowest index
                best = ra[i][j];
                arg = j;
            }
        }
        ia[i] = arg;
    }
    out.scatter_(1, idx.unsqueeze(1), 1.0);
    return out;
}

void expand_domain(PriorConfig& cfg, nets::ModelBundle& bundle, uint64_t seed) {
    cfg.validate();
    const int64_t k_old = cfg.num_domains;
    TORCH_CHECK(bundle.task_head->out_dim() == k_old,
                "task head output does not match prior num_domains");
    auto gen = cpu_generator(mix_seed(seed, 0xd0));
    bundle.task_head->expand_output(gen);
    bundle.generator->expand_code_input(cfg.dim_z + k_old, 1, gen);
    cfg.num_domains = k_old + 1;
    cfg.domain_probs.assign(cfg.num_domains, 1.0 / static_cast<double>(cfg.num_domains));
    cfg.empirical_task_probs = cfg.domain_probs;
    bundle.arch.num_domains = cfg.num_domains;
    cfg.validate();
}

LatentTriple sample_prior_triple(int64_t n, const PriorConfig& cfg, bool include_class,
                                 uint64_t seed) {
    LatentTriple t;
    t.z = sample_continuous_prior(n, cfg, mix_seed(seed, 1));
    t.a = sample_categorical_prior(n, cfg.domain_probs, mix_seed(seed, 2));
    t.hard_a = true;
    if (include_class) {
        std::vector<double> cp = cfg.class_probs;
        if (cp.empty())
            cp.assign(cfg.num_classes, 1.0 / static_cast<double>(cfg.num_classes));
        t.c = sample_categorical_prior(n, cp, mix_seed(seed, 3));
        t.hard_c = true;
    }
    return t;
}

}  // namespace lvg::latent
