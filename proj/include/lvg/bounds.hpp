#ifndef LVG_BOUNDS_HPP
#define LVG_BOUNDS_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lvg/data.hpp"
#include "lvg/nets.hpp"

namespace lvg::bounds {

// A labelled point cloud in R^s (images are flattened on construction).
struct SampleCloud {
    torch::Tensor points;  // [n, s] float64
    torch::Tensor labels;  // [n] int64; optional
    std::string source_tag;

    static SampleCloud from_images(const torch::Tensor& images, const torch::Tensor& labels = {},
                                   std::string tag = {});
    int64_t size() const { return points.defined() ? points.size(0) : 0; }
    int64_t dim() const { return points.defined() ? points.size(1) : 0; }
    void validate() const;
};

// h: points [n, s] (or images) -> logits [n, k]
using Classifier = std::function<torch::Tensor(const torch::Tensor&)>;

// Mean 0-1 loss of h on a labelled cloud.
double empirical_risk(const Classifier& h, const SampleCloud& cloud);

struct WassersteinEstimate {
    double value = 0.0;
    std::string estimator;  // "exact-ot" or "sliced-<P>"
};

// W_p between two clouds. Exact assignment on the Euclidean cost matrix when
// min(n_a, n_b) <= 512 (the larger cloud is subsampled to match, seeded);
// sliced approximation with 256 random projections above that.
WassersteinEstimate wasserstein_distance(const SampleCloud& a, const SampleCloud& b,
                                         int order = 1, uint64_t seed = 0x57a1);

// Exact-regime internals, exposed for the exhaustive-oracle tests.
double exact_ot_cost(const torch::Tensor& a, const torch::Tensor& b, int order);
double sliced_wasserstein(const torch::Tensor& a, const torch::Tensor& b, int order,
                          int64_t num_projections, uint64_t seed);

// risk_on_generated + W + sqrt(2 ln(1/delta_conf)/a') (sqrt(1/n_t)+sqrt(1/n_t')) + D
double theorem2_rhs(double risk_on_generated, double w_distance, int64_t n_t, int64_t n_tprime,
                    double delta_conf, double a_prime, double combined_error);

struct BoundReport {
    double risk_real = 0.0;       // E(h(nu_t)) on real data (the bounded side)
    double risk_generated = 0.0;  // E(h(nu_t')) on generated data
    double w_distance = 0.0;
    int64_t n_real = 0;
    int64_t n_generated = 0;
    double delta_conf = 0.05;
    double a_prime = 1.0;
    double s_prime = 0.0;         // recorded only; the n_0 regime is non-constructive
    double combined_error = 0.0;  // D (D* in the Lemma-3 reading)
    double rhs = 0.0;
    bool holds = false;
};

BoundReport theorem2_report(double risk_real, double risk_generated, double w_distance,
                            int64_t n_real, int64_t n_generated, double delta_conf,
                            double a_prime, double combined_error);

// Sums per-task risks and right-hand sides over i = 1..K.
BoundReport lemma2_accumulated(const std::vector<BoundReport>& per_task);

struct Lemma3Report {
    double elbo_two_source = 0.0;
    double w_distance = 0.0;
    double confidence_term = 0.0;
    double d_star = 0.0;
    double lower_bound = 0.0;  // certified lower bound on the sample log-likelihood
};
Lemma3Report lemma3_gap(double elbo_two_source, double w_distance, int64_t n, int64_t n_prime,
                        double delta_conf, double a_prime, double d_star);

// --- probe classifiers ------------------------------------------------------

struct ProbeSpec {
    std::string kind = "conv";  // "conv" (2 conv + linear) | "mlp" | "linear"
    int64_t hidden = 64;        // mlp only
    int64_t epochs = 5;
    int64_t batch_size = 64;
    double lr = 1e-3;
    uint64_t seed = 0x9b;
};

struct TrainedProbe {
    nets::ClassHead net{nullptr};
    Classifier fn() const;
    // penultimate-layer features, used by the feature-distance proxy
    torch::Tensor features(const torch::Tensor& x) const;
};

TrainedProbe train_probe(const torch::Tensor& images, const torch::Tensor& labels,
                         int64_t arity, const ProbeSpec& spec);

// D approximation: best combined risk of a fixed 3-configuration probe sweep
// trained on the union of the two labelled sets.
double estimate_combined_error(const torch::Tensor& real_x, const torch::Tensor& real_labels,
                               const torch::Tensor& gen_x, const torch::Tensor& gen_labels,
                               int64_t arity, uint64_t seed);

// --- per-epoch risk curves (bounds.csv) -------------------------------------

// Produces (images, int64 labels); the live-generator source in training runs,
// or a held-out real-data stub in the idealized checks.
using LabelledSource = std::function<std::pair<torch::Tensor, torch::Tensor>(int64_t n,
                                                                             uint64_t seed)>;

struct RiskRow {
    int64_t epoch = 0;
    double risk1 = 0.0;  // probe risk on real task-1 test data
    double risk2 = 0.0;  // probe risk on generated data
    double w_distance = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

struct RiskTrackerConfig {
    int64_t sample_n = 1000;
    double delta_conf = 0.05;
    double a_prime = 1.0;
    ProbeSpec probe;
    uint64_t seed = 0xb0;
    bool estimate_d = true;  // run the D sweep (else D = 0)
};

class RiskTracker {
public:
    RiskTracker(LabelledSource source, data::Dataset test_set, int64_t arity,
                RiskTrackerConfig cfg);
    RiskRow on_epoch(int64_t epoch);
    const std::vector<RiskRow>& rows() const { return rows_; }
    void write_csv(const std::filesystem::path& file) const;

private:
    LabelledSource source_;
    data::Dataset test_;
    int64_t arity_;
    RiskTrackerConfig cfg_;
    std::vector<RiskRow> rows_;
};

}  // namespace lvg::bounds

#endif
