#include "lvg/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lvg/common.hpp"
#include "lvg/losses.hpp"

namespace lvg::bounds {

SampleCloud SampleCloud::from_images(const torch::Tensor& images, const torch::Tensor& labels,
                                     std::string tag) {
    SampleCloud c;
    c.points = images.detach().flatten(1).to(torch::kFloat64).contiguous();
    if (labels.defined()) c.labels = labels.detach().to(torch::kLong);
    c.source_tag = std::move(tag);
    c.validate();
    return c;
}

void SampleCloud::validate() const {
    TORCH_CHECK(points.defined() && points.dim() == 2 && points.size(0) >= 1,
                "sample cloud must be a non-empty [n, s] matrix");
    check_finite(points, "sample cloud");
    if (labels.defined())
        TORCH_CHECK(labels.size(0) == points.size(0), "cloud label count mismatch");
}

double empirical_risk(const Classifier& h, const SampleCloud& cloud) {
    cloud.validate();
    TORCH_CHECK(cloud.labels.defined(), "empirical_risk needs a labelled cloud");
    torch::NoGradGuard ng;
    auto logits = h(cloud.points);
    TORCH_CHECK(logits.dim() == 2 && logits.size(0) == cloud.size(),
                "classifier returned a bad logits shape");
    auto pred = logits.argmax(1);
    return (pred != cloud.labels).to(torch::kFloat64).mean().item<double>();
}

// ---------------------------------------------------------------------------
// Optimal transport
// ---------------------------------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// O(n^3) shortest-augmenting-path assignment; exact for real-valued costs.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

torch::Tensor pairwise_euclidean(const torch::Tensor& a, const torch::Tensor& b) {
    // explicit row-by-row distances keep the cost matrix reproducible
    auto diff = a.unsqueeze(1) - b.unsqueeze(0);  // [n, m, s]
    return diff.pow(2).sum(2).clamp_min(0.0).sqrt();
}

torch::Tensor maybe_subsample(const torch::Tensor& pts, int64_t m, uint64_t seed) {
    if (pts.size(0) == m) return pts;
    auto gen = cpu_generator(seed);
    auto perm = torch::randperm(pts.size(0), gen, torch::kLong).slice(0, 0, m);
    return pts.index_select(0, perm);
}

}  // namespace

double exact_ot_cost(const torch::Tensor& a, const torch::Tensor& b, int order) {
    TORCH_CHECK(a.size(0) == b.size(0), "exact OT expects equal-size clouds");
    TORCH_CHECK(order == 1 || order == 2, "order must be 1 or 2");
    const int n = static_cast<int>(a.size(0));
    auto dist = pairwise_euclidean(a, b);
    auto cost_t = order == 1 ? dist : dist.pow(2);
    auto cost_c = cost_t.contiguous();
    std::vector<double> cost(cost_c.data_ptr<double>(), cost_c.data_ptr<double>() + n * n);
    auto match = solve_assignment(cost, n);
    // total recomputed from the original entries in row order
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[i * n + match[i]];
    const double mean = total / n;
    return order == 1 ? mean : std::sqrt(mean);
}

double sliced_wasserstein(const torch::Tensor& a, const torch::Tensor& b, int order,
                          int64_t num_projections, uint64_t seed) {
    TORCH_CHECK(order == 1 || order == 2, "order must be 1 or 2");
    TORCH_CHECK(num_projections >= 1, "need at least one projection");
    const int64_t s = a.size(1);
    auto gen = cpu_generator(seed);
    auto dirs = torch::randn({num_projections, s}, gen, torch::kFloat64);
    dirs = dirs / dirs.norm(2, 1, true).clamp_min(1e-12);
    const int64_t m = std::min(a.size(0), b.size(0));
    auto pa = maybe_subsample(a, m, mix_seed(seed, 1));
    auto pb = maybe_subsample(b, m, mix_seed(seed, 2));
    auto proj_a = pa.matmul(dirs.t());  // [m, P]
    auto proj_b = pb.matmul(dirs.t());
    auto sa = std::get<0>(proj_a.sort(0));
    auto sb = std::get<0>(proj_b.sort(0));
    auto diff = (sa - sb).abs();
    if (order == 1) return diff.mean().item<double>();
    return std::sqrt(diff.pow(2).mean().item<double>());
}

WassersteinEstimate wasserstein_distance(const SampleCloud& a, const SampleCloud& b, int order,
                                         uint64_t seed) {
    a.validate();
    b.validate();
    TORCH_CHECK(a.dim() == b.dim(), "cloud dimension mismatch: ", a.dim(), " vs ", b.dim());
    const int64_t m = std::min(a.size(), b.size());
    if (m <= 512) {
        auto pa = maybe_subsample(a.points, m, mix_seed(seed, 11));
        auto pb = maybe_subsample(b.points, m, mix_seed(seed, 12));
        return {exact_ot_cost(pa, pb, order), "exact-ot"};
    }
    return {sliced_wasserstein(a.points, b.points, order, 256, seed), "sliced-256"};
}

// ---------------------------------------------------------------------------
// Theorem 2 / Lemma 2 / Lemma 3
// ---------------------------------------------------------------------------

namespace {
double confidence_term(int64_t n_t, int64_t n_tprime, double delta_conf, double a_prime) {
    TORCH_CHECK(delta_conf > 0.0 && delta_conf < 1.0, "delta_conf must lie in (0, 1)");
    TORCH_CHECK(a_prime > 0.0 && a_prime < std::sqrt(2.0), "a' must lie in (0, sqrt(2))");
    TORCH_CHECK(n_t >= 1 && n_tprime >= 1, "sample sizes must be >= 1");
    return std::sqrt(2.0 * std::log(1.0 / delta_conf) / a_prime) *
           (std::sqrt(1.0 / static_cast<double>(n_t)) +
            std::sqrt(1.0 / static_cast<double>(n_tprime)));
}
}  // namespace

double theorem2_rhs(double risk_on_generated, double w_distance, int64_t n_t, int64_t n_tprime,
                    double delta_conf, double a_prime, double combined_error) {
    return risk_on_generated + w_distance + confidence_term(n_t, n_tprime, delta_conf, a_prime) +
           combined_error;
}

BoundReport theorem2_report(double risk_real, double risk_generated, double w_distance,
                            int64_t n_real, int64_t n_generated, double delta_conf,
                            double a_prime, double combined_error) {
    BoundReport r;
    r.risk_real = risk_real;
    r.risk_generated = risk_generated;
    r.w_distance = w_distance;
    r.n_real = n_real;
    r.n_generated = n_generated;
    r.delta_conf = delta_conf;
    r.a_prime = a_prime;
    r.combined_error = combined_error;
    r.rhs = theorem2_rhs(risk_generated, w_distance, n_real, n_generated, delta_conf, a_prime,
                         combined_error);
    r.holds = risk_real <= r.rhs + 1e-9;
    return r;
}

BoundReport lemma2_accumulated(const std::vector<BoundReport>& per_task) {
    TORCH_CHECK(!per_task.empty(), "lemma2_accumulated: no reports");
    BoundReport agg;
    agg.delta_conf = per_task.front().delta_conf;
    agg.a_prime = per_task.front().a_prime;
    for (const auto& r : per_task) {
        agg.risk_real += r.risk_real;
        agg.risk_generated += r.risk_generated;
        agg.w_distance += r.w_distance;
        agg.combined_error += r.combined_error;
        agg.rhs += r.rhs;
        agg.n_real += r.n_real;
        agg.n_generated += r.n_generated;
    }
    agg.holds = agg.risk_real <= agg.rhs + 1e-9;
    return agg;
}

Lemma3Report lemma3_gap(double elbo_two_source, double w_distance, int64_t n, int64_t n_prime,
                        double delta_conf, double a_prime, double d_star) {
    Lemma3Report r;
    r.elbo_two_source = elbo_two_source;
    r.w_distance = w_distance;
    r.confidence_term = confidence_term(n, n_prime, delta_conf, a_prime);
    r.d_star = d_star;
    r.lower_bound = elbo_two_source - w_distance - r.confidence_term - d_star;
    return r;
}

// ---------------------------------------------------------------------------
// Probe classifiers
// ---------------------------------------------------------------------------

Classifier TrainedProbe::fn() const {
    auto probe = net;
    return [probe](const torch::Tensor& x) mutable {
        torch::NoGradGuard ng;
        auto input = x;
        if (input.dim() == 2) {
            auto& a = probe->arch;
            input = input.view({x.size(0), a.image_c, a.image_h, a.image_w}).to(torch::kFloat32);
        }
        return probe->forward(input);
    };
}

torch::Tensor TrainedProbe::features(const torch::Tensor& x) const {
    torch::NoGradGuard ng;
    auto probe = net;
    auto& a = probe->arch;
    auto input = x;
    if (input.dim() == 2)
        input = input.view({x.size(0), a.image_c, a.image_h, a.image_w}).to(torch::kFloat32);
    if (a.kind == "conv") {
        auto h = nets::make_activation(a.activation, probe->conv1->forward(input));
        h = nets::make_activation(a.activation, probe->conv2->forward(h));
        return h.flatten(1);
    }
    auto h = input.flatten(1);
    for (auto& l : probe->mlp) h = nets::make_activation(a.activation, l->forward(h));
    return h;
}

TrainedProbe train_probe(const torch::Tensor& images, const torch::Tensor& labels,
                         int64_t arity, const ProbeSpec& spec) {
    TORCH_CHECK(images.dim() == 4 && images.size(0) == labels.size(0),
                "train_probe expects images [n,c,h,w] and labels [n]");
    nets::ArchitectureSpec arch;
    arch.image_c = images.size(1);
    arch.image_h = images.size(2);
    arch.image_w = images.size(3);
    arch.num_classes = arity;
    if (spec.kind == "conv") {
        arch.kind = "conv";
        arch.cls_widths = {16, 32};
    } else if (spec.kind == "mlp") {
        arch.kind = "mlp";
        arch.cls_widths = {spec.hidden};
    } else {
        arch.kind = "mlp";
        arch.cls_widths = {};
    }
    torch::manual_seed(spec.seed);
    TrainedProbe probe;
    probe.net = nets::ClassHead(arch);
    auto x = images.to(torch::kFloat32);
    auto y = data::onehot(labels, arity);
    torch::optim::Adam opt(probe.net->parameters(), torch::optim::AdamOptions(spec.lr));
    const int64_t n = x.size(0);
    for (int64_t epoch = 0; epoch < spec.epochs; ++epoch) {
        auto batches = data::epoch_batches(n, spec.batch_size, mix_seed(spec.seed, 0x40 + epoch));
        for (auto& idx : batches) {
            opt.zero_grad();
            auto loss = losses::cross_entropy_onehot(probe.net->forward(x.index_select(0, idx)),
                                                     y.index_select(0, idx));
            loss.backward();
            opt.step();
        }
    }
    probe.net->eval();
    return probe;
}

double estimate_combined_error(const torch::Tensor& real_x, const torch::Tensor& real_labels,
                               const torch::Tensor& gen_x, const torch::Tensor& gen_labels,
                               int64_t arity, uint64_t seed) {
    auto union_x = torch::cat({real_x, gen_x}, 0);
    auto union_y = torch::cat({real_labels, gen_labels}, 0);
    const std::vector<ProbeSpec> sweep = {
        {"conv", 64, 3, 64, 1e-3, mix_seed(seed, 1)},
        {"mlp", 64, 5, 64, 1e-3, mix_seed(seed, 2)},
        {"linear", 0, 5, 64, 1e-2, mix_seed(seed, 3)},
    };
    double best = kInf;
    for (const auto& spec : sweep) {
        auto probe = train_probe(union_x, union_y, arity, spec);
        auto h = probe.fn();
        auto risk = [&](const torch::Tensor& x, const torch::Tensor& lab) {
            torch::NoGradGuard ng;
            return (h(x).argmax(1) != lab).to(torch::kFloat64).mean().item<double>();
        };
        best = std::min(best, risk(real_x, real_labels) + risk(gen_x, gen_labels));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Per-epoch risk curves
// ---------------------------------------------------------------------------

RiskTracker::RiskTracker(LabelledSource source, data::Dataset test_set, int64_t arity,
                         RiskTrackerConfig cfg)
    : source_(std::move(source)), test_(std::move(test_set)), arity_(arity), cfg_(cfg) {
    TORCH_CHECK(test_.size() > 0, "risk tracker needs a labelled test set");
}

RiskRow RiskTracker::on_epoch(int64_t epoch) {
    const uint64_t es = mix_seed(cfg_.seed, 0x1000 + static_cast<uint64_t>(epoch));
    auto [train_x, train_y] = source_(cfg_.sample_n, mix_seed(es, 1));
    auto [eval_x, eval_y] = source_(cfg_.sample_n, mix_seed(es, 2));

    auto spec = cfg_.probe;
    spec.seed = mix_seed(es, 3);
    auto probe = train_probe(train_x, train_y, arity_, spec);
    auto h = probe.fn();

    auto real_cloud = SampleCloud::from_images(test_.images, test_.labels, "real-task-1");
    auto gen_cloud = SampleCloud::from_images(eval_x, eval_y, "generated-task-1");
    const double risk1 = empirical_risk(h, real_cloud);
    const double risk2 = empirical_risk(h, gen_cloud);
    const auto w = wasserstein_distance(real_cloud, gen_cloud, 1, mix_seed(es, 4));
    double d = 0.0;
    if (cfg_.estimate_d)
        d = estimate_combined_error(test_.images, test_.labels, eval_x, eval_y, arity_,
                                    mix_seed(es, 5));
    auto report = theorem2_report(risk1, risk2, w.value, real_cloud.size(), gen_cloud.size(),
                                  cfg_.delta_conf, cfg_.a_prime, d);

    RiskRow row{epoch, risk1, risk2, w.value, report.rhs, report.holds};
    rows_.push_back(row);
    return row;
}

void RiskTracker::write_csv(const std::filesystem::path& file) const {
    CsvWriter csv(file, {"epoch", "risk1", "risk2", "W", "rhs", "holds"});
    for (const auto& r : rows_)
        csv.write_row({std::to_string(r.epoch), fmt_double(r.risk1), fmt_double(r.risk2),
                       fmt_double(r.w_distance), fmt_double(r.rhs), r.holds ? "1" : "0"});
}

}  // namespace lvg::bounds
