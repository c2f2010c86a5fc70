#ifndef LVG_TRAINER_HPP
#define LVG_TRAINER_HPP

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "lvg/data.hpp"
#include "lvg/latent.hpp"
#include "lvg/losses.hpp"
#include "lvg/nets.hpp"
#include "lvg/replay.hpp"

namespace lvg::trainer {

enum class Mode { kSupervised, kSemi, kUnsupervised };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct TrainConfig {
    Mode mode = Mode::kSupervised;
    double lr = 1e-3;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.9;
    int64_t epochs = 10;
    int64_t batch_size = 64;
    losses::LossWeights weights;
    int64_t n_labelled = 1000;      // semi mode: labelled images per task
    double replay_fraction = -1.0;  // < 0 selects the default (t-1)/t at task t
    uint64_t seed = 1234;
    int64_t threads = 2;

    void validate() const;
};

struct TrainState {
    nets::ModelBundle bundle;
    latent::PriorConfig prior;
    int64_t task_index = 0;  // tasks completed or in progress (1-based during training)
    std::optional<replay::ReplaySnapshot> snapshot;
    int64_t step = 0;
};

TrainState make_initial_state(const nets::ArchitectureSpec& arch, const TrainConfig& cfg);

// Raised when a loss goes non-finite; carries the diagnostic record.
struct NonFiniteLossError : std::runtime_error {
    NonFiniteLossError(std::string msg, losses::LossReport rep)
        : std::runtime_error(std::move(msg)), report(std::move(rep)) {}
    losses::LossReport report;
};

// Inputs of one optimization iteration, assembled by train_task.
struct IterationBatch {
    replay::MixedBatch mixed;      // critic real side; provenance splits the dream sources
    losses::SourceBatch labelled;  // semi mode only: current labelled (+ replay pseudo)
    torch::Tensor unlabelled_x;    // semi mode only
};

// Owns the three per-phase optimizers over disjoint parameter groups:
// wake touches {omega} then {theta}; dreaming touches {theta, varsigma,
// epsilon, delta}.
class Trainer {
public:
    Trainer(TrainState& state, const TrainConfig& cfg);

    losses::LossReport wake_step(const IterationBatch& batch, uint64_t seed);
    losses::LossReport dream_step(const IterationBatch& batch, int64_t step_in_task,
                                  uint64_t seed);
    losses::LossReport iterate(const IterationBatch& batch, int64_t step_in_task, uint64_t seed);

    losses::LossWeights& weights() { return weights_; }

private:
    TrainState& state_;
    TrainConfig cfg_;
    losses::LossWeights weights_;
    std::unique_ptr<torch::optim::Adam> opt_critic_, opt_gen_, opt_vae_;
};

using StepSink = std::function<void(const TrainState&, int64_t task, int64_t epoch,
                                    const losses::LossReport&)>;
using EpochHook = std::function<void(const TrainState&, int64_t task, int64_t epoch)>;
using TaskHook = std::function<void(const TrainState&, int64_t task)>;

struct SequenceHooks {
    StepSink on_step;
    EpochHook on_epoch;
    TaskHook on_task_end;
};

// One task: per iteration, the wake phase (n_critic critic steps + one
// generator step on a mixed real+replay batch) followed by one dreaming step
// on the mode's two-source objective.
void train_task(TrainState& state, const data::TaskSpec& task, const TrainConfig& cfg,
                const SequenceHooks& hooks = {});

// The lifelong loop: snapshot + domain expansion before each task after the
// first, then train_task.
TrainState run_sequence(const data::TaskStream& stream, const nets::ArchitectureSpec& arch,
                        const TrainConfig& cfg, const SequenceHooks& hooks = {});

// Replay-side helper shared with evaluation: draws n replay samples and pads
// their domain one-hots to `num_domains` columns.
losses::SourceBatch replay_source_batch(const replay::ReplaySnapshot& snap, int64_t n,
                                        int64_t num_domains, bool with_labels, uint64_t seed);

}  // namespace lvg::trainer

#endif
