#include "lvg/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "lvg/common.hpp"

namespace lvg::losses {

void LossWeights::validate() const {
    if (lambda_gp < 0) throw std::invalid_argument("lambda_gp must be >= 0");
    if (beta < 0) throw std::invalid_argument("beta must be >= 0");
    if (gamma < 0) throw std::invalid_argument("gamma must be >= 0");
    if (capacity_start > capacity_end)
        throw std::invalid_argument("capacity ramp start must be <= end");
    if (n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
}

double LossWeights::capacity_at(int64_t step) const {
    const int64_t dur = std::max<int64_t>(capacity_steps, 1);
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(dur));
    return capacity_start + frac * (capacity_end - capacity_start);
}

const std::vector<std::string>& LossReport::keys() {
    static const std::vector<std::string> k = {"d_loss", "g_loss", "gp",   "recon", "kl_z",
                                               "kl_a",   "kl_c",   "ce_a", "ce_c",  "total"};
    return k;
}

LossReport LossReport::zeros() {
    LossReport r;
    for (auto& k : keys()) r.scalars[k] = 0.0;
    return r;
}

double LossReport::at(const std::string& key) const {
    auto it = scalars.find(key);
    TORCH_CHECK(it != scalars.end(), "no such loss scalar: ", key);
    return it->second;
}

void LossReport::set(const std::string& key, double v) { scalars[key] = v; }

void LossReport::set(const std::string& key, const torch::Tensor& v) {
    scalars[key] = v.item<double>();
}

bool LossReport::finite() const {
    for (auto& [k, v] : scalars)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// WGAN-GP
// ---------------------------------------------------------------------------

torch::Tensor gradient_penalty(nets::Critic& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, const torch::Tensor& mix_u) {
    TORCH_CHECK(real.sizes() == fake.sizes(), "gradient_penalty: real/fake shape mismatch");
    const int64_t n = real.size(0);
    auto u = mix_u;
    if (u.dim() == 1) u = u.view({n, 1, 1, 1});
    TORCH_CHECK(u.size(0) == n, "gradient_penalty: mix coefficients batch mismatch");
    auto mixed =
        (u * real.detach() + (1.0 - u) * fake.detach()).clone().requires_grad_(true);
    auto scores = critic->forward(mixed);
    auto grads = torch::autograd::grad({scores}, {mixed}, {torch::ones_like(scores)},
                                       /*retain_graph=*/true, /*create_graph=*/true)[0];
    auto norms = grads.flatten(1).norm(2, 1);
    return (norms - 1.0).pow(2).mean();
}

WganLosses wgan_losses(nets::Critic& critic, nets::Generator& gen, const torch::Tensor& real,
                       const latent::LatentTriple& codes, const LossWeights& w, uint64_t seed,
                       LossReport* report, bool with_g_loss) {
    w.validate();
    auto fake = nets::generate(gen, codes.z, codes.a, codes.c);
    TORCH_CHECK(fake.sizes() == real.sizes(), "wgan_losses: real/fake shape mismatch");
    const int64_t n = real.size(0);
    auto ugen = cpu_generator(mix_seed(seed, 0x6d));
    auto u = torch::rand({n, 1, 1, 1}, ugen, real.options());

    auto fake_detached = fake.detach();
    auto gp = w.lambda_gp > 0 ? gradient_penalty(critic, real, fake_detached, u)
                              : torch::zeros({}, real.options());
    auto d_loss = critic->forward(fake_detached).mean() - critic->forward(real).mean() +
                  w.lambda_gp * gp;
    auto g_loss = with_g_loss ? -critic->forward(fake).mean() : torch::zeros({}, real.options());
    if (report) {
        report->set("d_loss", d_loss);
        report->set("g_loss", g_loss);
        report->set("gp", gp);
    }
    return {d_loss, g_loss, gp};
}

// ---------------------------------------------------------------------------
// KL helpers and cross-entropies
// ---------------------------------------------------------------------------

torch::Tensor kl_gaussian_std(const torch::Tensor& mu, const torch::Tensor& sigma) {
    TORCH_CHECK(mu.sizes() == sigma.sizes(), "kl_gaussian_std: shape mismatch");
    TORCH_CHECK(sigma.min().item<double>() > 0.0, "kl_gaussian_std: sigma must be > 0");
    auto per_dim = 0.5 * (mu.pow(2) + sigma.pow(2) - 1.0 - 2.0 * torch::log(sigma));
    if (per_dim.dim() == 1) return per_dim.sum();
    return per_dim.sum(1).mean();
}

namespace {
void check_prob_rows(const torch::Tensor& p, const char* what) {
    TORCH_CHECK(p.dim() == 2, what, " must be [n, k]");
    TORCH_CHECK(p.min().item<double>() >= -1e-9, what, " entries must be >= 0");
    TORCH_CHECK((p.sum(1) - 1.0).abs().max().item<double>() <= 1e-6, what,
                " rows must sum to 1");
}
}  // namespace

torch::Tensor kl_categorical(const torch::Tensor& q_probs, const torch::Tensor& p_probs) {
    auto q = q_probs.dim() == 1 ? q_probs.unsqueeze(0) : q_probs;
    auto p = p_probs.dim() == 1 ? p_probs.unsqueeze(0) : p_probs;
    if (p.size(0) == 1 && q.size(0) > 1) p = p.expand_as(q);
    check_prob_rows(q, "q_probs");
    check_prob_rows(p.slice(0, 0, 1), "p_probs");
    TORCH_CHECK(q.sizes() == p.sizes(), "kl_categorical: shape mismatch");
    constexpr double kEps = 1e-12;
    auto terms = q * (torch::log(q.clamp_min(kEps)) - torch::log(p.clamp_min(kEps)));
    return terms.sum(1).mean();
}

torch::Tensor cross_entropy_onehot(const torch::Tensor& logits, const torch::Tensor& target) {
    TORCH_CHECK(logits.sizes() == target.sizes(),
                "cross_entropy_onehot: logits/target shape mismatch");
    return -(target * torch::log_softmax(logits, 1)).sum(1).mean();
}

torch::Tensor task_ce(nets::TaskHead& head, const torch::Tensor& z, const torch::Tensor& a_star) {
    return cross_entropy_onehot(head->forward(z), a_star);
}

torch::Tensor class_ce(nets::ClassHead& head, const torch::Tensor& x, const torch::Tensor& y) {
    return cross_entropy_onehot(head->forward(x), y);
}

// ---------------------------------------------------------------------------
// ELBO machinery
// ---------------------------------------------------------------------------

namespace {

// Bernoulli pixel log-likelihood: per-image sum, batch mean.
torch::Tensor bernoulli_loglik(const torch::Tensor& xhat, const torch::Tensor& x) {
    constexpr double kEps = 1e-7;
    auto p = xhat.clamp(kEps, 1.0 - kEps);
    auto ll = x * torch::log(p) + (1.0 - x) * torch::log(1.0 - p);
    return ll.flatten(1).sum(1).mean();
}

torch::Tensor probs_row(const std::vector<double>& probs, const torch::Tensor& like) {
    return torch::tensor(probs, torch::TensorOptions().dtype(like.dtype())).unsqueeze(0);
}

struct ElboParts {
    torch::Tensor elbo, recon, kl_z, kl_a, kl_c;
    torch::Tensor raw_kl_z;  // before any capacity reshaping
};

// Shared single-sample ELBO evaluation. `substitute_c` overrides the class
// code fed to the decoder (semi-supervised labelled path); `kl_z_override`
// replaces the kl_z term (unsupervised capacity variant).
ElboParts elbo_parts(nets::ModelBundle& bundle, const torch::Tensor& x,
                     const latent::PriorConfig& prior, uint64_t seed,
                     const torch::Tensor& substitute_c = {},
                     std::function<torch::Tensor(const torch::Tensor&)> kl_z_reshape = {}) {
    prior.validate();
    TORCH_CHECK(x.dim() == 4 && x.size(0) >= 1, "elbo expects a non-empty image batch");
    const int64_t n = x.size(0);
    const bool with_class = bundle.generator->arch.class_conditional;

    auto [mu, sigma] = nets::infer_z(bundle.encoder, x);
    auto ngen = cpu_generator(mix_seed(seed, 0x2a));
    auto noise = torch::randn(mu.sizes(), ngen, mu.options());
    auto z = latent::reparameterize(mu, sigma, noise);
    auto kl_z = kl_gaussian_std(mu, sigma);

    auto task_logits = nets::infer_task(bundle.task_head, z);
    auto draw_a = latent::make_gumbel_draw(n, task_logits.size(1), mix_seed(seed, 0xa1),
                                           task_logits.scalar_type() == torch::kFloat64
                                               ? torch::kFloat64
                                               : torch::kFloat32);
    auto a = latent::gumbel_softmax(task_logits, prior.temperature, draw_a);
    auto kl_a = kl_categorical(torch::softmax(task_logits, 1),
                               probs_row(prior.domain_probs, task_logits));

    torch::Tensor c, kl_c;
    if (with_class) {
        auto cls_logits = nets::infer_class(bundle.class_head, x);
        std::vector<double> cp = prior.class_probs;
        if (cp.empty()) cp.assign(prior.num_classes, 1.0 / double(prior.num_classes));
        kl_c = kl_categorical(torch::softmax(cls_logits, 1), probs_row(cp, cls_logits));
        if (substitute_c.defined()) {
            c = substitute_c;
        } else {
            auto draw_c = latent::make_gumbel_draw(n, cls_logits.size(1), mix_seed(seed, 0xc1),
                                                   cls_logits.scalar_type() == torch::kFloat64
                                                       ? torch::kFloat64
                                                       : torch::kFloat32);
            c = latent::gumbel_softmax(cls_logits, prior.temperature, draw_c);
        }
    } else {
        kl_c = torch::zeros({}, x.options());
    }

    auto xhat = nets::generate(bundle.generator, z, a, c);
    auto recon = bernoulli_loglik(xhat, x);

    ElboParts parts;
    parts.raw_kl_z = kl_z;
    parts.kl_z = kl_z_reshape ? kl_z_reshape(kl_z) : kl_z;
    parts.recon = recon;
    parts.kl_a = kl_a;
    parts.kl_c = kl_c;
    parts.elbo = recon - parts.kl_z - kl_a - kl_c;
    return parts;
}

}  // namespace

torch::Tensor elbo_joint(nets::ModelBundle& bundle, const torch::Tensor& x,
                         const latent::PriorConfig& prior, uint64_t seed, LossReport* report) {
    auto parts = elbo_parts(bundle, x, prior, seed);
    check_finite(parts.elbo, "elbo_joint total");
    if (report) {
        report->set("recon", parts.recon);
        report->set("kl_z", parts.kl_z);
        report->set("kl_a", parts.kl_a);
        report->set("kl_c", parts.kl_c);
        report->set("total", parts.elbo);
    }
    return parts.elbo;
}

torch::Tensor dream_loss_supervised(nets::ModelBundle& bundle, const SourceBatch& current,
                                    const SourceBatch& replay, const latent::PriorConfig& prior,
                                    uint64_t seed, LossReport* report) {
    TORCH_CHECK(current.size() >= 1, "dream_loss_supervised: empty current batch");
    TORCH_CHECK(current.y.defined() && current.a.defined(),
                "dream_loss_supervised: current labels required");

    auto eval_source = [&](const SourceBatch& src) {
        auto parts = elbo_parts(bundle, src.x, prior, seed);
        auto ce_c = class_ce(bundle.class_head, src.x, src.y);
        // Eq-6 path: a* against q_epsilon(a|z) with z sampled from the encoder
        auto [mu, sigma] = nets::infer_z(bundle.encoder, src.x);
        auto ngen = cpu_generator(mix_seed(seed, 0xae));
        auto z = latent::reparameterize(mu, sigma, torch::randn(mu.sizes(), ngen, mu.options()));
        auto ce_a = task_ce(bundle.task_head, z, src.a);
        return std::make_tuple(parts, ce_c, ce_a);
    };

    auto [cur, cur_ce_c, cur_ce_a] = eval_source(current);
    auto loss = -cur.elbo + cur_ce_c + cur_ce_a;
    auto recon = cur.recon, kl_z = cur.kl_z, kl_a = cur.kl_a, kl_c = cur.kl_c;
    auto ce_c = cur_ce_c, ce_a = cur_ce_a;
    if (replay.size() > 0) {
        TORCH_CHECK(replay.y.defined() && replay.a.defined(),
                    "dream_loss_supervised: replay pseudo-labels required");
        auto [rep, rep_ce_c, rep_ce_a] = eval_source(replay);
        loss = loss - rep.elbo + rep_ce_c + rep_ce_a;
        recon = recon + rep.recon;
        kl_z = kl_z + rep.kl_z;
        kl_a = kl_a + rep.kl_a;
        kl_c = kl_c + rep.kl_c;
        ce_c = ce_c + rep_ce_c;
        ce_a = ce_a + rep_ce_a;
    }
    check_finite(loss, "dream_loss_supervised total");
    if (report) {
        report->set("recon", recon);
        report->set("kl_z", kl_z);
        report->set("kl_a", kl_a);
        report->set("kl_c", kl_c);
        report->set("ce_a", ce_a);
        report->set("ce_c", ce_c);
        report->set("total", loss);
    }
    return loss;
}

torch::Tensor semi_supervised_loss(nets::ModelBundle& bundle, const SourceBatch& labelled,
                                   const torch::Tensor& unlabelled_x,
                                   const latent::PriorConfig& prior, const LossWeights& w,
                                   uint64_t seed, LossReport* report) {
    w.validate();
    TORCH_CHECK(labelled.size() >= 1 && labelled.y.defined(),
                "semi_supervised_loss: labelled data with targets required");

    auto lab = elbo_parts(bundle, labelled.x, prior, seed, /*substitute_c=*/labelled.y);
    auto ce_c = class_ce(bundle.class_head, labelled.x, labelled.y);
    auto loss = -lab.elbo + ce_c;
    auto recon = lab.recon, kl_z = lab.kl_z, kl_a = lab.kl_a, kl_c = lab.kl_c;

    const bool has_unlab = unlabelled_x.defined() && unlabelled_x.size(0) > 0;
    if (w.beta > 0.0 && has_unlab) {
        auto unl = elbo_parts(bundle, unlabelled_x, prior, mix_seed(seed, 0x5e));
        loss = loss - w.beta * unl.elbo;
        recon = recon + unl.recon;
        kl_z = kl_z + unl.kl_z;
        kl_a = kl_a + unl.kl_a;
        kl_c = kl_c + unl.kl_c;
    }
    check_finite(loss, "semi_supervised_loss total");
    if (report) {
        report->set("recon", recon);
        report->set("kl_z", kl_z);
        report->set("kl_a", kl_a);
        report->set("kl_c", kl_c);
        report->set("ce_c", ce_c);
        report->set("ce_a", 0.0);
        report->set("total", loss);
    }
    return loss;
}

torch::Tensor unsup_dream_loss(nets::ModelBundle& bundle, const torch::Tensor& current_x,
                               const torch::Tensor& replay_x, const latent::PriorConfig& prior,
                               const LossWeights& w, int64_t step, uint64_t seed,
                               LossReport* report) {
    w.validate();
    TORCH_CHECK(!bundle.generator->arch.class_conditional,
                "unsup_dream_loss requires a generator without class conditioning");
    std::function<torch::Tensor(const torch::Tensor&)> reshape;
    if (w.disentangle) {
        const double cap = w.capacity_at(step);
        const double gamma = w.gamma;
        reshape = [cap, gamma](const torch::Tensor& kl) { return gamma * (kl - cap).abs(); };
    }

    auto cur = elbo_parts(bundle, current_x, prior, seed, {}, reshape);
    auto loss = -cur.elbo;
    auto recon = cur.recon, kl_z = cur.kl_z, kl_a = cur.kl_a;
    if (replay_x.defined() && replay_x.size(0) > 0) {
        auto rep = elbo_parts(bundle, replay_x, prior, seed, {}, reshape);
        loss = loss - rep.elbo;
        recon = recon + rep.recon;
        kl_z = kl_z + rep.kl_z;
        kl_a = kl_a + rep.kl_a;
    }
    check_finite(loss, "unsup_dream_loss total");
    if (report) {
        report->set("recon", recon);
        report->set("kl_z", kl_z);
        report->set("kl_a", kl_a);
        report->set("kl_c", 0.0);
        report->set("total", loss);
    }
    return loss;
}

double elbo_linear_gaussian(double w, double b, double s, double mu, double sig, double x) {
    TORCH_CHECK(s > 0 && sig > 0, "elbo_linear_gaussian: scales must be positive");
    auto t = [](double v) { return torch::tensor({v}, torch::kFloat64); };
    const double kl = kl_gaussian_std(t(mu), t(sig)).item<double>();
    const double resid = x - w * mu - b;
    const double exp_loglik =
        -0.5 * std::log(2.0 * M_PI * s * s) - (resid * resid + w * w * sig * sig) / (2.0 * s * s);
    return exp_loglik - kl;
}

}  // namespace lvg::losses
