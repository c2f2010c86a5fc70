#include "lvg/trainer.hpp"

#include <cmath>

#include "lvg/common.hpp"

namespace lvg::trainer {

Mode mode_from_string(const std::string& s) {
    if (s == "supervised") return Mode::kSupervised;
    if (s == "semi") return Mode::kSemi;
    if (s == "unsupervised") return Mode::kUnsupervised;
    throw std::invalid_argument("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::kSupervised: return "supervised";
        case Mode::kSemi: return "semi";
        case Mode::kUnsupervised: return "unsupervised";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (replay_fraction > 1.0) throw std::invalid_argument("replay_fraction must be <= 1");
    weights.validate();
}

TrainState make_initial_state(const nets::ArchitectureSpec& arch, const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.bundle = nets::ModelBundle::make(arch, mix_seed(cfg.seed, 0x1));
    st.prior = latent::PriorConfig::make(arch.dim_z, arch.num_classes, arch.num_domains);
    return st;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainState& state, const TrainConfig& cfg)
    : state_(state), cfg_(cfg), weights_(cfg.weights) {
    cfg.validate();
    auto opts = [&](double lr) {
        return torch::optim::AdamOptions(lr).betas({cfg.adam_beta1, cfg.adam_beta2});
    };
    opt_critic_ = std::make_unique<torch::optim::Adam>(state.bundle.critic->parameters(),
                                                       opts(cfg.lr));
    opt_gen_ = std::make_unique<torch::optim::Adam>(state.bundle.generator->parameters(),
                                                    opts(cfg.lr));
    std::vector<torch::Tensor> vae_params;
    for (auto& p : state.bundle.generator->parameters()) vae_params.push_back(p);
    for (auto& p : state.bundle.encoder->parameters()) vae_params.push_back(p);
    for (auto& p : state.bundle.task_head->parameters()) vae_params.push_back(p);
    if (cfg.mode != Mode::kUnsupervised)
        for (auto& p : state.bundle.class_head->parameters()) vae_params.push_back(p);
    opt_vae_ = std::make_unique<torch::optim::Adam>(vae_params, opts(cfg.lr));
}

namespace {
void guard_finite(const losses::LossReport& rep, const char* phase, const TrainState& st) {
    if (!rep.finite()) {
        std::string msg = std::string("non-finite loss in ") + phase + " at step " +
                          std::to_string(st.step) + " (task " + std::to_string(st.task_index) +
                          "):";
        for (auto& [k, v] : rep.scalars) msg += " " + k + "=" + std::to_string(v);
        throw NonFiniteLossError(msg, rep);
    }
}
}  // namespace

losses::LossReport Trainer::wake_step(const IterationBatch& batch, uint64_t seed) {
    auto& bundle = state_.bundle;
    const auto& real = batch.mixed.x;
    const int64_t n = real.size(0);
    const bool with_class = bundle.generator->arch.class_conditional;
    auto report = losses::LossReport::zeros();

    for (int64_t i = 0; i < weights_.n_critic; ++i) {
        auto codes = latent::sample_prior_triple(n, state_.prior, with_class,
                                                 mix_seed(seed, 0x10 + i));
        opt_critic_->zero_grad();
        auto wl = losses::wgan_losses(bundle.critic, bundle.generator, real, codes, weights_,
                                      mix_seed(seed, 0x30 + i), nullptr,
                                      /*with_g_loss=*/false);
        wl.d_loss.backward();
        opt_critic_->step();
        if (i == weights_.n_critic - 1) {
            report.set("d_loss", wl.d_loss);
            report.set("gp", wl.gp);
        }
    }
    {
        auto codes = latent::sample_prior_triple(n, state_.prior, with_class,
                                                 mix_seed(seed, 0x50));
        opt_gen_->zero_grad();
        auto wl = losses::wgan_losses(bundle.critic, bundle.generator, real, codes, weights_,
                                      mix_seed(seed, 0x51), nullptr, /*with_g_loss=*/true);
        wl.g_loss.backward();
        opt_gen_->step();
        report.set("g_loss", wl.g_loss);
    }
    guard_finite(report, "wake", state_);
    return report;
}

losses::LossReport Trainer::dream_step(const IterationBatch& batch, int64_t step_in_task,
                                       uint64_t seed) {
    auto& bundle = state_.bundle;
    auto report = losses::LossReport::zeros();
    opt_vae_->zero_grad();
    torch::Tensor loss;
    switch (cfg_.mode) {
        case Mode::kSupervised: {
            auto cur = batch.mixed.real_part();
            auto rep = batch.mixed.replay_part();
            loss = losses::dream_loss_supervised(bundle, cur, rep, state_.prior, seed, &report);
            break;
        }
        case Mode::kSemi: {
            loss = losses::semi_supervised_loss(bundle, batch.labelled, batch.unlabelled_x,
                                                state_.prior, weights_, seed, &report);
            break;
        }
        case Mode::kUnsupervised: {
            auto cur = batch.mixed.real_part();
            auto rep = batch.mixed.replay_part();
            loss = losses::unsup_dream_loss(bundle, cur.x, rep.size() ? rep.x : torch::Tensor{},
                                            state_.prior, weights_, step_in_task, seed, &report);
            break;
        }
    }
    loss.backward();
    opt_vae_->step();
    guard_finite(report, "dreaming", state_);
    return report;
}

losses::LossReport Trainer::iterate(const IterationBatch& batch, int64_t step_in_task,
                                    uint64_t seed) {
    auto wake = wake_step(batch, mix_seed(seed, 0x77));
    auto dream = dream_step(batch, step_in_task, mix_seed(seed, 0x99));
    for (auto& key : {"d_loss", "g_loss", "gp"}) dream.set(key, wake.at(key));
    return dream;
}

// ---------------------------------------------------------------------------
// Task loop
// ---------------------------------------------------------------------------

losses::SourceBatch replay_source_batch(const replay::ReplaySnapshot& snap, int64_t n,
                                        int64_t num_domains, bool with_labels, uint64_t seed) {
    auto draw = replay::sample_replay(snap, n, seed);
    losses::SourceBatch out;
    out.x = draw.x;
    if (with_labels && draw.codes.c.defined()) out.y = replay::pseudo_label(draw.codes);
    auto a = draw.codes.a;
    if (a.size(1) < num_domains) {
        auto pad = torch::zeros({a.size(0), num_domains - a.size(1)}, a.options());
        a = torch::cat({a, pad}, 1);
    }
    out.a = a;
    return out;
}

void train_task(TrainState& state, const data::TaskSpec& task, const TrainConfig& cfg,
                const SequenceHooks& hooks) {
    cfg.validate();
    TORCH_CHECK(task.train.size() > 0, "train_task: empty task data");
    at::set_num_threads(static_cast<int>(cfg.threads));
    state.task_index += 1;
    const int64_t t = state.task_index;
    TORCH_CHECK(t == 1 || (state.snapshot && state.snapshot->task_count == t - 1),
                "train_task: task ", t, " requires a snapshot of the first ", t - 1, " tasks");

    const bool supervised_labels = cfg.mode != Mode::kUnsupervised;
    const int64_t domains = state.prior.num_domains;
    const int64_t arity = state.bundle.arch.num_classes;
    double rho = cfg.replay_fraction >= 0.0 ? cfg.replay_fraction
                                            : (static_cast<double>(t - 1) / static_cast<double>(t));
    if (t == 1) rho = 0.0;

    // current-data chunk per iteration; replay rows are appended on top so the
    // mixed batch carries the rho fraction while every epoch still covers the
    // whole current set
    const int64_t batch = cfg.batch_size;
    const int64_t cur_chunk = batch - static_cast<int64_t>(rho * static_cast<double>(batch));
    TORCH_CHECK(cur_chunk >= 1, "replay fraction leaves no room for current data");

    // semi mode: a class-balanced labelled subset, the rest unlabelled
    data::SemiSplit split;
    int64_t lab_cursor = 0;
    std::vector<torch::Tensor> lab_batches;
    if (cfg.mode == Mode::kSemi) {
        split = data::make_semi_split(task.train, std::min(cfg.n_labelled, task.train.size()),
                                      mix_seed(cfg.seed, 0x800 + t));
    }

    Trainer trainer(state, cfg);
    // capacity ramp spans this task's training
    const int64_t steps_per_epoch = (task.train.size() + cur_chunk - 1) / cur_chunk;
    trainer.weights().capacity_steps = std::max<int64_t>(1, cfg.epochs * steps_per_epoch - 1);

    int64_t step_in_task = 0;
    const int64_t labelled_chunk = std::max<int64_t>(1, batch / 2);
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const uint64_t eseed = mix_seed(cfg.seed, 0x10000 * t + 0x100 + epoch);
        auto batches = data::epoch_batches(task.train.size(), cur_chunk, mix_seed(eseed, 0x1));
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& idx = batches[bi];
            const uint64_t sseed = mix_seed(eseed, 0x9000 + bi);
            const int64_t n_cur = idx.size(0);

            auto real = data::gather(task.train, idx, supervised_labels ? arity : 0, t - 1,
                                     domains);
            losses::SourceBatch rep;
            int64_t n_rep = 0;
            if (t >= 2 && rho > 0.0) {
                n_rep = static_cast<int64_t>(
                    std::llround(rho / (1.0 - rho) * static_cast<double>(n_cur)));
                if (n_rep > 0)
                    rep = replay_source_batch(*state.snapshot, n_rep, domains,
                                              supervised_labels, mix_seed(sseed, 0x2));
            }

            IterationBatch ib;
            replay::ReplayBatchSpec mix_spec;
            mix_spec.batch_size = n_cur + n_rep;
            // fraction chosen so floor(fraction * size) lands exactly on n_rep
            mix_spec.replay_fraction =
                n_rep > 0 ? (static_cast<double>(n_rep) + 0.5) /
                                static_cast<double>(mix_spec.batch_size)
                          : 0.0;
            mix_spec.seed = mix_seed(sseed, 0x3);
            ib.mixed = replay::mix_batches(real, rep, mix_spec);

            if (cfg.mode == Mode::kSemi) {
                // labelled cycler (reshuffled on wrap) + current unlabelled batch
                if (lab_batches.empty() ||
                    lab_cursor >= static_cast<int64_t>(lab_batches.size())) {
                    lab_batches = data::epoch_batches(split.labelled.size(), labelled_chunk,
                                                      mix_seed(sseed, 0x4));
                    lab_cursor = 0;
                }
                auto lab = data::gather(split.labelled, lab_batches[lab_cursor++], arity, t - 1,
                                        domains);
                if (rep.size() > 0) {
                    losses::SourceBatch merged;
                    merged.x = torch::cat({lab.x, rep.x}, 0);
                    merged.y = torch::cat({lab.y, rep.y}, 0);
                    merged.a = torch::cat({lab.a, rep.a}, 0);
                    ib.labelled = merged;
                } else {
                    ib.labelled = lab;
                }
                if (split.unlabelled.size() > 0) {
                    auto ugen = cpu_generator(mix_seed(sseed, 0x5));
                    auto uidx = torch::randperm(split.unlabelled.size(), ugen, torch::kLong)
                                    .slice(0, 0, std::min<int64_t>(batch, split.unlabelled.size()));
                    ib.unlabelled_x = split.unlabelled.images.index_select(0, uidx);
                }
            }

            auto report = trainer.iterate(ib, step_in_task, mix_seed(sseed, 0x6));
            state.step += 1;
            step_in_task += 1;
            if (hooks.on_step) hooks.on_step(state, t, epoch, report);
        }
        if (hooks.on_epoch) hooks.on_epoch(state, t, epoch);
    }
}

TrainState run_sequence(const data::TaskStream& stream, const nets::ArchitectureSpec& arch,
                        const TrainConfig& cfg, const SequenceHooks& hooks) {
    TORCH_CHECK(!stream.tasks.empty(), "run_sequence: empty task stream");
    cfg.validate();
    at::set_num_threads(static_cast<int>(cfg.threads));
    auto state = make_initial_state(arch, cfg);
    for (size_t i = 0; i < stream.tasks.size(); ++i) {
        const int64_t t = static_cast<int64_t>(i) + 1;
        if (t >= 2) {
            state.snapshot = replay::build_snapshot(state.bundle, state.prior, t - 1);
            latent::expand_domain(state.prior, state.bundle, mix_seed(cfg.seed, 0xe0 + t));
        }
        train_task(state, stream.tasks[i], cfg, hooks);
        if (hooks.on_task_end) hooks.on_task_end(state, t);
    }
    return state;
}

}  // namespace lvg::trainer
