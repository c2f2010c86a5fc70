#include "lvg/replay.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

#include "lvg/common.hpp"

namespace lvg::replay {

using json = nlohmann::json;

void ReplayBatchSpec::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(replay_fraction >= 0.0 && replay_fraction <= 1.0))
        throw std::invalid_argument("replay_fraction must lie in [0, 1]");
}

ReplaySnapshot build_snapshot(const nets::ModelBundle& bundle,
                              const latent::PriorConfig& prior, int64_t task_count) {
    TORCH_CHECK(task_count >= 1, "build_snapshot before any training");
    prior.validate();
    ReplaySnapshot snap;
    snap.generator = nets::Generator(bundle.generator->arch);
    nets::copy_parameters(*bundle.generator, *snap.generator);
    snap.generator->eval();
    for (auto& p : snap.generator->parameters()) p.set_requires_grad(false);
    snap.class_head = nets::ClassHead(bundle.class_head->arch);
    nets::copy_parameters(*bundle.class_head, *snap.class_head);
    snap.class_head->eval();
    for (auto& p : snap.class_head->parameters()) p.set_requires_grad(false);
    snap.prior = prior;
    snap.task_count = task_count;
    return snap;
}

ReplayDraw sample_replay(const ReplaySnapshot& snap, int64_t n, uint64_t seed) {
    TORCH_CHECK(n >= 1, "sample_replay: n must be >= 1");
    TORCH_CHECK(snap.generator, "sample_replay: empty snapshot");
    const bool with_class = snap.generator->arch.class_conditional;
    auto codes = latent::sample_prior_triple(n, snap.prior, with_class, seed);
    torch::NoGradGuard ng;
    auto gen = snap.generator;  // module handles share the impl
    auto x = nets::generate(gen, codes.z, codes.a, codes.c);
    return {x, codes};
}

namespace {
torch::Tensor take(const torch::Tensor& t, int64_t n) { return t.slice(0, 0, n); }
}  // namespace

MixedBatch mix_batches(const losses::SourceBatch& real, const losses::SourceBatch& replay,
                       const ReplayBatchSpec& spec) {
    spec.validate();
    TORCH_CHECK(real.size() > 0 || replay.size() > 0, "mix_batches: both sources empty");
    const int64_t n_rep =
        static_cast<int64_t>(spec.replay_fraction * static_cast<double>(spec.batch_size));
    const int64_t n_real = spec.batch_size - n_rep;
    TORCH_CHECK(real.size() >= n_real, "mix_batches: real source too small: have ", real.size(),
                ", need ", n_real);
    TORCH_CHECK(replay.size() >= n_rep, "mix_batches: replay source too small");

    std::vector<torch::Tensor> xs, ys, as, flags;
    if (n_real > 0) {
        xs.push_back(take(real.x, n_real));
        if (real.y.defined()) ys.push_back(take(real.y, n_real));
        if (real.a.defined()) as.push_back(take(real.a, n_real));
        flags.push_back(torch::zeros({n_real}, torch::kBool));
    }
    if (n_rep > 0) {
        xs.push_back(take(replay.x, n_rep));
        if (replay.y.defined()) ys.push_back(take(replay.y, n_rep));
        if (replay.a.defined()) as.push_back(take(replay.a, n_rep));
        flags.push_back(torch::ones({n_rep}, torch::kBool));
    }
    auto x = torch::cat(xs, 0);
    auto flag = torch::cat(flags, 0);
    const bool have_y = ys.size() == xs.size();
    const bool have_a = as.size() == xs.size();

    auto gen = cpu_generator(spec.seed);
    auto perm = torch::randperm(spec.batch_size, gen, torch::kLong);

    MixedBatch out;
    out.x = x.index_select(0, perm);
    out.is_replay = flag.index_select(0, perm);
    if (have_y) out.y = torch::cat(ys, 0).index_select(0, perm);
    if (have_a) out.a = torch::cat(as, 0).index_select(0, perm);
    return out;
}

namespace {
losses::SourceBatch select_rows(const MixedBatch& b, const torch::Tensor& mask) {
    auto idx = mask.nonzero().squeeze(1);
    losses::SourceBatch out;
    out.x = b.x.index_select(0, idx);
    if (b.y.defined()) out.y = b.y.index_select(0, idx);
    if (b.a.defined()) out.a = b.a.index_select(0, idx);
    return out;
}
}  // namespace

losses::SourceBatch MixedBatch::real_part() const { return select_rows(*this, ~is_replay); }
losses::SourceBatch MixedBatch::replay_part() const { return select_rows(*this, is_replay); }

torch::Tensor pseudo_label(const latent::LatentTriple& codes) {
    TORCH_CHECK(codes.c.defined() && codes.c.numel() > 0,
                "pseudo_label: no class code in unsupervised mode");
    return latent::harden(codes.c);
}

void save_snapshot(const ReplaySnapshot& snap, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json m;
    m["task_count"] = snap.task_count;
    m["generator_arch"] = {{"num_domains", snap.generator->arch.num_domains}};
    m["prior"] = {{"dim_z", snap.prior.dim_z},
                  {"num_classes", snap.prior.num_classes},
                  {"num_domains", snap.prior.num_domains},
                  {"domain_probs", snap.prior.domain_probs},
                  {"class_probs", snap.prior.class_probs},
                  {"empirical_task_probs", snap.prior.empirical_task_probs},
                  {"temperature", snap.prior.temperature}};
    {
        std::ofstream mf(dir / "snapshot.json");
        mf << m.dump(2) << "\n";
    }
    nets::save_module_raw(*snap.generator, dir / "generator.bin");
    nets::save_module_raw(*snap.class_head, dir / "class_head.bin");
    // arch manifest reuses the bundle format for the two frozen nets
    json arch;
    arch["generator"] = {{"image_h", snap.generator->arch.image_h},
                         {"image_w", snap.generator->arch.image_w},
                         {"image_c", snap.generator->arch.image_c},
                         {"dim_z", snap.generator->arch.dim_z},
                         {"num_classes", snap.generator->arch.num_classes},
                         {"num_domains", snap.generator->arch.num_domains},
                         {"class_conditional", snap.generator->arch.class_conditional},
                         {"kind", snap.generator->arch.kind},
                         {"activation", snap.generator->arch.activation},
                         {"conditioning", snap.generator->arch.conditioning},
                         {"gen_widths", snap.generator->arch.gen_widths},
                         {"critic_widths", snap.generator->arch.critic_widths},
                         {"enc_widths", snap.generator->arch.enc_widths},
                         {"task_widths", snap.generator->arch.task_widths},
                         {"cls_widths", snap.generator->arch.cls_widths}};
    std::ofstream af(dir / "arch.json");
    af << arch.dump(2) << "\n";
}

ReplaySnapshot load_snapshot(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "snapshot.json");
    TORCH_CHECK(mf.good(), "snapshot_not_found: ", dir.string());
    json m = json::parse(mf);
    std::ifstream af(dir / "arch.json");
    TORCH_CHECK(af.good(), "snapshot arch manifest missing: ", dir.string());
    json aj = json::parse(af).at("generator");

    nets::ArchitectureSpec arch;
    arch.image_h = aj.at("image_h");
    arch.image_w = aj.at("image_w");
    arch.image_c = aj.at("image_c");
    arch.dim_z = aj.at("dim_z");
    arch.num_classes = aj.at("num_classes");
    arch.num_domains = aj.at("num_domains");
    arch.class_conditional = aj.at("class_conditional");
    arch.kind = aj.at("kind");
    arch.activation = aj.at("activation");
    arch.conditioning = aj.at("conditioning");
    arch.gen_widths = aj.at("gen_widths").get<std::vector<int64_t>>();
    arch.critic_widths = aj.at("critic_widths").get<std::vector<int64_t>>();
    arch.enc_widths = aj.at("enc_widths").get<std::vector<int64_t>>();
    arch.task_widths = aj.at("task_widths").get<std::vector<int64_t>>();
    arch.cls_widths = aj.at("cls_widths").get<std::vector<int64_t>>();

    ReplaySnapshot snap;
    snap.task_count = m.at("task_count");
    auto& pj = m.at("prior");
    snap.prior.dim_z = pj.at("dim_z");
    snap.prior.num_classes = pj.at("num_classes");
    snap.prior.num_domains = pj.at("num_domains");
    snap.prior.domain_probs = pj.at("domain_probs").get<std::vector<double>>();
    snap.prior.class_probs = pj.at("class_probs").get<std::vector<double>>();
    snap.prior.empirical_task_probs =
        pj.at("empirical_task_probs").get<std::vector<double>>();
    snap.prior.temperature = pj.at("temperature");

    snap.generator = nets::Generator(arch);
    nets::load_module_raw(*snap.generator, dir / "generator.bin");
    snap.generator->eval();
    for (auto& p : snap.generator->parameters()) p.set_requires_grad(false);
    auto cls_arch = arch;
    snap.class_head = nets::ClassHead(cls_arch);
    nets::load_module_raw(*snap.class_head, dir / "class_head.bin");
    snap.class_head->eval();
    for (auto& p : snap.class_head->parameters()) p.set_requires_grad(false);
    return snap;
}

}  // namespace lvg::replay
