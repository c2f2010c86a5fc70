#ifndef LVG_LOSSES_HPP
#define LVG_LOSSES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>

#include "lvg/latent.hpp"
#include "lvg/nets.hpp"

namespace lvg::losses {

struct LossWeights {
    double lambda_gp = 10.0;  // gradient-penalty weight
    double beta = 1.0;        // semi-supervised mixing weight
    double gamma = 0.0;       // disentanglement multiplier
    bool disentangle = false;
    double capacity_start = 0.5;
    double capacity_end = 25.0;
    int64_t capacity_steps = 1;  // ramp duration, in optimization steps of the task
    int64_t n_critic = 5;

    void validate() const;
    // Linear ramp from capacity_start to capacity_end, clamped at the end.
    double capacity_at(int64_t step) const;
};

// Named scalars logged per step. Sign convention: `total` is the scalar the
// optimizer minimizes for the op that produced the report; elbo_joint is the
// exception, where `total` is the ELBO itself (a maximization quantity).
struct LossReport {
    std::map<std::string, double> scalars;

    double at(const std::string& key) const;
    void set(const std::string& key, double v);
    void set(const std::string& key, const torch::Tensor& v);
    bool finite() const;
    static LossReport zeros();  // all standard keys present, value 0
    static const std::vector<std::string>& keys();
};

// One source of training data: images plus optional one-hot targets.
struct SourceBatch {
    torch::Tensor x;  // [n, c, h, w]
    torch::Tensor y;  // [n, L] one-hot class labels; may be undefined
    torch::Tensor a;  // [n, K] one-hot domain labels; may be undefined
    int64_t size() const { return x.defined() ? x.size(0) : 0; }
};

// Mean over the batch of (||grad_x D(x_mix)||_2 - 1)^2 at
// x_mix = u * real + (1 - u) * fake. `mix_u` holds per-sample u in [0,1],
// shape [n] or [n,1,1,1].
torch::Tensor gradient_penalty(nets::Critic& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, const torch::Tensor& mix_u);

struct WganLosses {
    torch::Tensor d_loss;  // E[D(G(codes))] - E[D(x_real)] + lambda * gp  (critic minimizes)
    torch::Tensor g_loss;  // -E[D(G(codes))]                              (generator minimizes)
    torch::Tensor gp;
};
WganLosses wgan_losses(nets::Critic& critic, nets::Generator& gen, const torch::Tensor& real,
                       const latent::LatentTriple& codes, const LossWeights& w, uint64_t seed,
                       LossReport* report = nullptr, bool with_g_loss = true);

// KL[N(mu, sigma^2) || N(0, I)]: per-sample sum over dims, mean over batch.
torch::Tensor kl_gaussian_std(const torch::Tensor& mu, const torch::Tensor& sigma);
// KL[q || p] for rows of probabilities; mean over batch.
torch::Tensor kl_categorical(const torch::Tensor& q_probs, const torch::Tensor& p_probs);

// Mean categorical cross-entropy of the head's softmax against one-hot targets.
torch::Tensor task_ce(nets::TaskHead& head, const torch::Tensor& z, const torch::Tensor& a_star);
torch::Tensor class_ce(nets::ClassHead& head, const torch::Tensor& x, const torch::Tensor& y);
torch::Tensor cross_entropy_onehot(const torch::Tensor& logits, const torch::Tensor& target);

// Joint ELBO: E_q[log p(x|z,a,c)] - KL_z - KL_a - KL_c with a single Monte
// Carlo sample per datum; Bernoulli pixel likelihood. Returns the ELBO.
torch::Tensor elbo_joint(nets::ModelBundle& bundle, const torch::Tensor& x,
                         const latent::PriorConfig& prior, uint64_t seed,
                         LossReport* report = nullptr);

// Dreaming-phase objective, supervised mode: two-source ELBO plus the
// class/task cross-entropies; returns the minimization target.
torch::Tensor dream_loss_supervised(nets::ModelBundle& bundle, const SourceBatch& current,
                                    const SourceBatch& replay, const latent::PriorConfig& prior,
                                    uint64_t seed, LossReport* report = nullptr);

// Semi-supervised composite: labelled ELBO (y substituted for c in the
// decoder) + beta * unlabelled ELBO + class cross-entropy on labelled data.
// The caller passes the two-source union (current labelled + pseudo-labelled
// replay) as `labelled`.
torch::Tensor semi_supervised_loss(nets::ModelBundle& bundle, const SourceBatch& labelled,
                                   const torch::Tensor& unlabelled_x,
                                   const latent::PriorConfig& prior, const LossWeights& w,
                                   uint64_t seed, LossReport* report = nullptr);

// Unsupervised dreaming objective (no c); with `disentangle` the kl_z term
// becomes gamma * |KL - C(step)|.
torch::Tensor unsup_dream_loss(nets::ModelBundle& bundle, const torch::Tensor& current_x,
                               const torch::Tensor& replay_x, const latent::PriorConfig& prior,
                               const LossWeights& w, int64_t step, uint64_t seed,
                               LossReport* report = nullptr);

// Closed-form ELBO of the 1-D conjugate model p(x|z) = N(w z + b, s^2),
// p(z) = N(0,1), q(z|x) = N(mu, sig^2); shares kl_gaussian_std with the
// Monte Carlo path.
double elbo_linear_gaussian(double w, double b, double s, double mu, double sig, double x);

}  // namespace lvg::losses

#endif
