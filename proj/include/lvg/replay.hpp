#ifndef LVG_REPLAY_HPP
#define LVG_REPLAY_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

#include "lvg/latent.hpp"
#include "lvg/losses.hpp"
#include "lvg/nets.hpp"

namespace lvg::replay {

// Frozen generator + prior configuration captured after finishing task t;
// samples from it stand in for all previously learned tasks.
struct ReplaySnapshot {
    nets::Generator generator{nullptr};   // deep copy, never trained again
    nets::ClassHead class_head{nullptr};  // frozen copy kept for diagnostics
    latent::PriorConfig prior;            // priors at snapshot time (a over task_count domains)
    int64_t task_count = 0;
};

ReplaySnapshot build_snapshot(const nets::ModelBundle& bundle,
                              const latent::PriorConfig& prior, int64_t task_count);

struct ReplayDraw {
    torch::Tensor x;            // generated images
    latent::LatentTriple codes; // the codes used, for pseudo-labelling
};
ReplayDraw sample_replay(const ReplaySnapshot& snap, int64_t n, uint64_t seed);

struct ReplayBatchSpec {
    int64_t batch_size = 64;
    double replay_fraction = 0.5;  // rho
    uint64_t seed = 0;
    void validate() const;
};

// A shuffled training batch with per-sample provenance so losses can split
// the two-source sums.
struct MixedBatch {
    torch::Tensor x;
    torch::Tensor y;          // one-hot class labels; undefined when unlabelled
    torch::Tensor a;          // one-hot domain labels; undefined when absent
    torch::Tensor is_replay;  // [n] bool
    int64_t size() const { return x.defined() ? x.size(0) : 0; }
    losses::SourceBatch real_part() const;
    losses::SourceBatch replay_part() const;
};

// floor(rho*batch_size) replay rows + the rest real, shuffled together.
MixedBatch mix_batches(const losses::SourceBatch& real, const losses::SourceBatch& replay,
                       const ReplayBatchSpec& spec);

// Labels for replay samples: the hardened class code used at generation.
torch::Tensor pseudo_label(const latent::LatentTriple& codes);

void save_snapshot(const ReplaySnapshot& snap, const std::filesystem::path& dir);
ReplaySnapshot load_snapshot(const std::filesystem::path& dir);

}  // namespace lvg::replay

#endif
