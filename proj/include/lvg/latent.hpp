#ifndef LVG_LATENT_HPP
#define LVG_LATENT_HPP

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "lvg/nets.hpp"

namespace lvg::latent {

// Prior configuration for the three latent codes: z ~ N(0, I),
// c ~ Cat(class_probs), a ~ Cat(domain_probs); empirical_task_probs m_i is
// the probability of seeing the i-th task (the supervised target A).
struct PriorConfig {
    int64_t dim_z = 8;
    int64_t num_classes = 10;  // L
    int64_t num_domains = 1;   // K
    std::vector<double> domain_probs = {1.0};
    std::vector<double> class_probs;  // defaults to uniform 1/L
    std::vector<double> empirical_task_probs = {1.0};
    double temperature = 0.67;

    static PriorConfig make(int64_t dim_z, int64_t num_classes, int64_t num_domains = 1,
                            double temperature = 0.67);
    void validate() const;  // throws std::invalid_argument
};

// A batch of codes with sampling metadata. Rows of c and a lie on the
// probability simplex; `hard_*` says the rows are exactly one-hot.
struct LatentTriple {
    torch::Tensor z;  // [n, dim_z]
    torch::Tensor c;  // [n, L]; undefined in unsupervised mode
    torch::Tensor a;  // [n, K]
    bool hard_c = false;
    bool hard_a = false;

    int64_t batch() const { return z.size(0); }
    void validate() const;
};

// Frozen Gumbel(0,1) noise, reproducible from its seed.
struct GumbelDraw {
    torch::Tensor g;
    uint64_t seed = 0;
};

GumbelDraw make_gumbel_draw(int64_t n, int64_t k, uint64_t seed,
                            torch::Dtype dtype = torch::kFloat32);

void validate_probs(const std::vector<double>& probs, const char* what);

torch::Tensor sample_continuous_prior(int64_t n, const PriorConfig& cfg, uint64_t seed);

// One-hot rows with empirical frequencies converging to `probs`.
torch::Tensor sample_categorical_prior(int64_t n, const std::vector<double>& probs,
                                       uint64_t seed);

// z = mu + noise (*) sigma, differentiable in mu and sigma.
torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& sigma,
                             const torch::Tensor& noise);

// Row j = exp((logits_j + g_j)/T) / sum_i exp((logits_i + g_i)/T).
// With straight_through the forward value is hardened while the gradient
// flows through the relaxation.
torch::Tensor gumbel_softmax(const torch::Tensor& logits, double temperature,
                             const GumbelDraw& draw, bool straight_through = false);

// argmax one-hot; ties broken by lowest index.
torch::Tensor harden(const torch::Tensor& relaxed);

// Appends one domain: K -> K+1 with uniform priors over seen tasks, the task
// head gains one output unit, and the generator input gains one `a` column.
// Existing weights are preserved bit-exact.
void expand_domain(PriorConfig& cfg, nets::ModelBundle& bundle, uint64_t seed);

// Draws a full (z, c, a) batch from the priors; `include_class` = false skips c.
LatentTriple sample_prior_triple(int64_t n, const PriorConfig& cfg, bool include_class,
                                 uint64_t seed);

}  // namespace lvg::latent

#endif
