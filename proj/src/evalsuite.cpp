#include "lvg/evalsuite.hpp"

#include <algorithm>
#include <map>

#include "lvg/common.hpp"
#include "lvg/latent.hpp"

namespace lvg::evalsuite {

void MetricsLog::append(MetricRecord rec) {
    const std::string key = rec.run_id + "|" + std::to_string(rec.task) + "|" +
                            std::to_string(rec.epoch) + "|" + rec.name;
    TORCH_CHECK(!keys_.count(key), "duplicate metric record: ", key);
    keys_.insert(key);
    records_.push_back(std::move(rec));
}

void MetricsLog::write_csv(const std::filesystem::path& file) const {
    CsvWriter csv(file, {"run", "task", "epoch", "name", "value", "seed"});
    for (const auto& r : records_)
        csv.write_row({r.run_id, std::to_string(r.task), std::to_string(r.epoch), r.name,
                       fmt_double(r.value), std::to_string(r.seed)});
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

namespace {

struct MeanCodes {
    torch::Tensor z, a, c;  // z = mu, a and c hardened
};

MeanCodes infer_mean_codes(nets::ModelBundle& bundle, const torch::Tensor& x) {
    torch::NoGradGuard ng;
    MeanCodes codes;
    auto [mu, sigma] = nets::infer_z(bundle.encoder, x);
    codes.z = mu;
    codes.a = latent::harden(torch::softmax(nets::infer_task(bundle.task_head, mu), 1));
    if (bundle.generator->arch.class_conditional)
        codes.c = latent::harden(torch::softmax(nets::infer_class(bundle.class_head, x), 1));
    return codes;
}

}  // namespace

torch::Tensor reconstruct(nets::ModelBundle& bundle, const torch::Tensor& x) {
    torch::NoGradGuard ng;
    auto codes = infer_mean_codes(bundle, x);
    return nets::generate(bundle.generator, codes.z, codes.a, codes.c);
}

ReconReport reconstruction_error(nets::ModelBundle& bundle, const data::Dataset& test) {
    torch::NoGradGuard ng;
    double sum_sq = 0.0;
    int64_t n_pixels = 0;
    const int64_t chunk = 256;
    for (int64_t start = 0; start < test.size(); start += chunk) {
        auto x = test.images.slice(0, start, std::min(test.size(), start + chunk));
        auto xhat = reconstruct(bundle, x);
        sum_sq += (xhat - x).pow(2).sum().item<double>();
        n_pixels += x.numel();
    }
    ReconReport r;
    r.rec = sum_sq / static_cast<double>(test.size());
    r.mse = sum_sq / static_cast<double>(n_pixels);
    return r;
}

double reconstruction_mse(nets::ModelBundle& bundle, const data::Dataset& test) {
    return reconstruction_error(bundle, test).rec;
}

// ---------------------------------------------------------------------------
// Accuracy metrics
// ---------------------------------------------------------------------------

PerTaskAccuracy replay_classifier_accuracy(const replay::ReplaySnapshot& snap,
                                           const std::vector<data::Dataset>& test_sets,
                                           int64_t n_samples, uint64_t seed) {
    TORCH_CHECK(snap.generator->arch.class_conditional,
                "replay_classifier_accuracy needs class-conditional generation");
    auto draw = replay::sample_replay(snap, n_samples, seed);
    auto labels = replay::pseudo_label(draw.codes).argmax(1);
    bounds::ProbeSpec spec;  // fixed probe: 2 conv + linear, 5 epochs
    spec.seed = mix_seed(seed, 0x5);
    auto probe = bounds::train_probe(draw.x, labels, snap.generator->arch.num_classes, spec);
    auto h = probe.fn();

    PerTaskAccuracy out;
    double weighted = 0.0;
    int64_t total = 0;
    torch::NoGradGuard ng;
    for (const auto& test : test_sets) {
        auto pred = h(test.images).argmax(1);
        const double acc = (pred == test.labels).to(torch::kFloat64).mean().item<double>();
        out.per_task.push_back(acc);
        weighted += acc * static_cast<double>(test.size());
        total += test.size();
    }
    out.overall = total ? weighted / static_cast<double>(total) : 0.0;
    return out;
}

double classifier_accuracy(nets::ModelBundle& bundle, const data::Dataset& test) {
    torch::NoGradGuard ng;
    auto pred = nets::infer_class(bundle.class_head, test.images).argmax(1);
    return (pred == test.labels).to(torch::kFloat64).mean().item<double>();
}

PerTaskAccuracy task_inference_accuracy(nets::ModelBundle& bundle,
                                        const std::vector<data::Dataset>& test_sets) {
    torch::NoGradGuard ng;
    PerTaskAccuracy out;
    double weighted = 0.0;
    int64_t total = 0;
    for (size_t i = 0; i < test_sets.size(); ++i) {
        auto [mu, sigma] = nets::infer_z(bundle.encoder, test_sets[i].images);
        auto pred = nets::infer_task(bundle.task_head, mu).argmax(1);
        const double acc =
            (pred == static_cast<int64_t>(i)).to(torch::kFloat64).mean().item<double>();
        out.per_task.push_back(acc);
        weighted += acc * static_cast<double>(test_sets[i].size());
        total += test_sets[i].size();
    }
    out.overall = total ? weighted / static_cast<double>(total) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Strips
// ---------------------------------------------------------------------------

torch::Tensor interpolate(nets::ModelBundle& bundle, const torch::Tensor& x1,
                          const torch::Tensor& x2, int64_t steps) {
    TORCH_CHECK(steps >= 2, "interpolate needs steps >= 2");
    torch::NoGradGuard ng;
    auto a1 = x1.dim() == 3 ? x1.unsqueeze(0) : x1;
    auto a2 = x2.dim() == 3 ? x2.unsqueeze(0) : x2;
    auto c1 = infer_mean_codes(bundle, a1);
    auto c2 = infer_mean_codes(bundle, a2);
    std::vector<torch::Tensor> frames;
    for (int64_t s = 0; s < steps; ++s) {
        const double w = static_cast<double>(s) / static_cast<double>(steps - 1);
        auto z = (1.0 - w) * c1.z + w * c2.z;
        auto a = (1.0 - w) * c1.a + w * c2.a;
        torch::Tensor c;
        if (c1.c.defined()) c = (1.0 - w) * c1.c + w * c2.c;
        frames.push_back(nets::generate(bundle.generator, z, a, c));
    }
    return torch::cat(frames, 0);
}

torch::Tensor traverse(nets::ModelBundle& bundle, const torch::Tensor& x, int64_t dim,
                       double lo, double hi, int64_t steps) {
    TORCH_CHECK(steps >= 1, "traverse needs steps >= 1");
    TORCH_CHECK(dim >= 0 && dim < bundle.arch.dim_z, "traverse: dim out of range");
    torch::NoGradGuard ng;
    auto xb = x.dim() == 3 ? x.unsqueeze(0) : x;
    auto codes = infer_mean_codes(bundle, xb);
    std::vector<torch::Tensor> frames;
    for (int64_t s = 0; s < steps; ++s) {
        const double w = steps == 1 ? 0.0 : static_cast<double>(s) / static_cast<double>(steps - 1);
        auto z = codes.z.clone();
        z.index_put_({torch::indexing::Slice(), dim}, lo + w * (hi - lo));
        frames.push_back(nets::generate(bundle.generator, z, codes.a, codes.c));
    }
    return torch::cat(frames, 0);
}

// ---------------------------------------------------------------------------
// Forgetting curves and the quality proxy
// ---------------------------------------------------------------------------

ForgettingCurve forgetting_curve(const MetricsLog& log) {
    ForgettingCurve curve;
    std::map<int64_t, std::map<std::string, double>> grid;
    std::set<std::string> names;
    for (const auto& r : log.records()) {
        if (r.name.rfind("acc_", 0) != 0) continue;
        grid[r.epoch][r.name.substr(4)] = r.value;
        names.insert(r.name.substr(4));
    }
    curve.task_names.assign(names.begin(), names.end());
    for (auto& [epoch, row] : grid) {
        curve.epochs.push_back(epoch);
        std::vector<double> vals;
        for (auto& name : curve.task_names) {
            auto it = row.find(name);
            TORCH_CHECK(it != row.end(), "incomplete forgetting grid at epoch ", epoch,
                        " task ", name);
            vals.push_back(it->second);
        }
        curve.accuracy.push_back(std::move(vals));
    }
    return curve;
}

void write_forgetting_csv(const ForgettingCurve& curve, const std::filesystem::path& file) {
    std::vector<std::string> header = {"epoch"};
    for (auto& t : curve.task_names) header.push_back("acc_" + t);
    CsvWriter csv(file, header);
    for (size_t i = 0; i < curve.epochs.size(); ++i) {
        std::vector<std::string> row = {std::to_string(curve.epochs[i])};
        for (double v : curve.accuracy[i]) row.push_back(fmt_double(v));
        csv.write_row(row);
    }
}

double fid_proxy(const bounds::TrainedProbe& probe, const torch::Tensor& real_images,
                 const torch::Tensor& generated_images, uint64_t seed) {
    auto real_feat = probe.features(real_images);
    auto gen_feat = probe.features(generated_images);
    auto ca = bounds::SampleCloud::from_images(real_feat, {}, "real-features");
    auto cb = bounds::SampleCloud::from_images(gen_feat, {}, "generated-features");
    return bounds::wasserstein_distance(ca, cb, 2, seed).value;
}

}  // namespace lvg::evalsuite
