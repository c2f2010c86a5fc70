#ifndef LVG_EVALSUITE_HPP
#define LVG_EVALSUITE_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "lvg/bounds.hpp"
#include "lvg/data.hpp"
#include "lvg/nets.hpp"
#include "lvg/replay.hpp"

namespace lvg::evalsuite {

struct MetricRecord {
    std::string run_id;
    int64_t task = 0;
    int64_t epoch = 0;
    std::string name;
    double value = 0.0;
    uint64_t seed = 0;
};

// Append-only; (run, task, epoch, name) must be unique.
class MetricsLog {
public:
    void append(MetricRecord rec);
    const std::vector<MetricRecord>& records() const { return records_; }
    void write_csv(const std::filesystem::path& file) const;

private:
    std::vector<MetricRecord> records_;
    std::set<std::string> keys_;
};

// Reconstruction through the mean codes: z = mu, hardened a and c.
torch::Tensor reconstruct(nets::ModelBundle& bundle, const torch::Tensor& x);

struct ReconReport {
    double rec = 0.0;  // per-image summed squared error (the Table-1 convention)
    double mse = 0.0;  // per-pixel mean squared error
};
ReconReport reconstruction_error(nets::ModelBundle& bundle, const data::Dataset& test);
double reconstruction_mse(nets::ModelBundle& bundle, const data::Dataset& test);

// Fresh fixed probe (2 conv + linear, 5 epochs, fixed seed) trained on
// generated pairs, evaluated on each task's real test set.
struct PerTaskAccuracy {
    std::vector<double> per_task;
    double overall = 0.0;
};
PerTaskAccuracy replay_classifier_accuracy(const replay::ReplaySnapshot& snap,
                                           const std::vector<data::Dataset>& test_sets,
                                           int64_t n_samples = 5000, uint64_t seed = 0xacc);

double classifier_accuracy(nets::ModelBundle& bundle, const data::Dataset& test);

PerTaskAccuracy task_inference_accuracy(nets::ModelBundle& bundle,
                                        const std::vector<data::Dataset>& test_sets);

// Image strip [steps, c, h, w]: linear path in z between the inferred mean
// codes, linear simplex paths between the hardened a and c endpoints.
torch::Tensor interpolate(nets::ModelBundle& bundle, const torch::Tensor& x1,
                          const torch::Tensor& x2, int64_t steps);

// Vary z[dim] over a linear grid, all other codes fixed at their inferred
// values.
torch::Tensor traverse(nets::ModelBundle& bundle, const torch::Tensor& x, int64_t dim,
                       double lo = -3.0, double hi = 3.0, int64_t steps = 9);

struct ForgettingCurve {
    std::vector<int64_t> epochs;          // global epoch index
    std::vector<std::string> task_names;  // evaluated task per column
    std::vector<std::vector<double>> accuracy;  // [epoch][task]
};
// Builds the per-task accuracy table from records named "acc_<task>".
ForgettingCurve forgetting_curve(const MetricsLog& log);
void write_forgetting_csv(const ForgettingCurve& curve, const std::filesystem::path& file);

// Feature-space 2-Wasserstein between generated and real sets under a probe's
// penultimate features. A stand-in quality score, not comparable to FID.
double fid_proxy(const bounds::TrainedProbe& probe, const torch::Tensor& real_images,
                 const torch::Tensor& generated_images, uint64_t seed = 0xf1d);

}  // namespace lvg::evalsuite

#endif
