#include "lvg/nets.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace lvg::nets {

using json = nlohmann::json;

void ArchitectureSpec::validate() const {
    if (image_h < 1 || image_w < 1 || image_c < 1)
        throw std::invalid_argument("image shape must be positive");
    if (dim_z < 1) throw std::invalid_argument("dim_z must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    if (num_domains < 1) throw std::invalid_argument("num_domains must be >= 1");
    if (kind != "conv" && kind != "mlp") throw std::invalid_argument("kind must be conv or mlp");
    if (conditioning != "concat-input")
        throw std::invalid_argument("unknown conditioning mode: " + conditioning);
    for (auto ws : {&gen_widths, &critic_widths, &enc_widths, &task_widths, &cls_widths})
        for (int64_t w : *ws)
            if (w < 1) throw std::invalid_argument("network widths must be >= 1");
    if (kind == "conv") {
        if (gen_widths.size() < 1 || critic_widths.size() < 2 || enc_widths.size() < 2)
            throw std::invalid_argument("conv mode needs >=1 generator and >=2 critic/encoder channel counts");
        if (image_h % 4 != 0 && image_h % 2 != 0)
            throw std::invalid_argument("conv mode needs image sides divisible by 2");
    }
}

torch::Tensor make_activation(const std::string& name, const torch::Tensor& x) {
    if (name == "relu") return torch::relu(x);
    if (name == "tanh") return torch::tanh(x);
    if (name == "leaky_relu") return torch::leaky_relu(x, 0.2);
    if (name == "softplus") return torch::softplus(x);
    TORCH_CHECK(false, "unknown activation: ", name);
}

namespace {

// conv trunk used by critic / encoder / class head: two stride-2 convolutions.
struct TrunkShape {
    int64_t out_h, out_w, flat;
};

TrunkShape conv_trunk_shape(const ArchitectureSpec& a) {
    int64_t h = a.image_h / 2, w = a.image_w / 2;
    h /= 2;
    w /= 2;
    return {h, w, h * w * a.critic_widths[1]};
}

torch::Tensor run_conv_trunk(torch::nn::Conv2d& c1, torch::nn::Conv2d& c2,
                             const ArchitectureSpec& arch, const torch::Tensor& x) {
    TORCH_CHECK(x.dim() == 4 && x.size(1) == arch.image_c && x.size(2) == arch.image_h &&
                    x.size(3) == arch.image_w,
                "image batch shape mismatch: got ", x.sizes(), " for ", arch.image_c, "x",
                arch.image_h, "x", arch.image_w);
    auto h = make_activation(arch.activation, c1->forward(x));
    h = make_activation(arch.activation, c2->forward(h));
    return h.flatten(1);
}

std::vector<torch::nn::Linear> build_mlp(torch::nn::Module& owner, int64_t in,
                                         const std::vector<int64_t>& widths,
                                         const std::string& prefix) {
    std::vector<torch::nn::Linear> layers;
    int64_t cur = in;
    for (size_t i = 0; i < widths.size(); ++i) {
        auto l = torch::nn::Linear(cur, widths[i]);
        owner.register_module(prefix + std::to_string(i), l);
        layers.push_back(l);
        cur = widths[i];
    }
    return layers;
}

torch::Tensor run_mlp(std::vector<torch::nn::Linear>& layers, const std::string& act,
                      torch::Tensor h) {
    for (auto& l : layers) h = make_activation(act, l->forward(h));
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const ArchitectureSpec& a) : arch(a) {
    arch.validate();
    const int64_t in = arch.code_dim();
    if (arch.kind == "conv") {
        const int64_t c0 = arch.gen_widths[0];
        if (arch.image_h % 4 == 0 && arch.image_w % 4 == 0 && arch.gen_widths.size() >= 2) {
            base_h = arch.image_h / 4;
            base_w = arch.image_w / 4;
            const int64_t c1 = arch.gen_widths[1];
            fc = register_module("fc", torch::nn::Linear(in, c0 * base_h * base_w));
            up1 = register_module("up1", torch::nn::ConvTranspose2d(
                                             torch::nn::ConvTranspose2dOptions(c0, c1, 4)
                                                 .stride(2)
                                                 .padding(1)));
            up2 = register_module("up2", torch::nn::ConvTranspose2d(
                                             torch::nn::ConvTranspose2dOptions(c1, arch.image_c, 4)
                                                 .stride(2)
                                                 .padding(1)));
        } else {
            base_h = arch.image_h / 2;
            base_w = arch.image_w / 2;
            fc = register_module("fc", torch::nn::Linear(in, c0 * base_h * base_w));
            up1 = register_module("up1", torch::nn::ConvTranspose2d(
                                             torch::nn::ConvTranspose2dOptions(c0, arch.image_c, 4)
                                                 .stride(2)
                                                 .padding(1)));
        }
    } else {
        mlp = build_mlp(*this, in, arch.gen_widths, "mlp");
        const int64_t last = arch.gen_widths.empty() ? in : arch.gen_widths.back();
        fc = register_module("fc", torch::nn::Linear(last, arch.pixels()));
    }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& codes) {
    TORCH_CHECK(codes.dim() == 2 && codes.size(1) == arch.code_dim(),
                "generator code dim mismatch: got ", codes.sizes(), ", expected [n, ",
                arch.code_dim(), "]");
    const int64_t n = codes.size(0);
    if (arch.kind == "conv") {
        auto h = make_activation(arch.activation, fc->forward(codes));
        h = h.view({n, arch.gen_widths[0], base_h, base_w});
        if (up2) {
            h = make_activation(arch.activation, up1->forward(h));
            h = up2->forward(h);
        } else {
            h = up1->forward(h);
        }
        return torch::sigmoid(h);
    }
    auto h = run_mlp(mlp, arch.activation, codes);
    h = torch::sigmoid(fc->forward(h));
    return h.view({n, arch.image_c, arch.image_h, arch.image_w});
}

void GeneratorImpl::expand_code_input(int64_t offset, int64_t extra, at::Generator& gen) {
    torch::NoGradGuard ng;
    const bool use_fc = (arch.kind == "conv") || mlp.empty();
    torch::nn::Linear first = use_fc ? fc : mlp.front();
    auto w = first->weight;  // [out, in]
    auto b = first->bias;
    const int64_t out = w.size(0), in = w.size(1);
    TORCH_CHECK(offset >= 0 && offset <= in, "bad expansion offset");
    auto grown = torch::nn::Linear(in + extra, out);
    grown->weight.slice(1, 0, offset).copy_(w.slice(1, 0, offset));
    grown->weight.slice(1, offset, offset + extra)
        .copy_(0.01 * torch::randn({out, extra}, gen, w.options()));
    grown->weight.slice(1, offset + extra, in + extra).copy_(w.slice(1, offset, in));
    grown->bias.copy_(b);
    if (use_fc) {
        replace_module("fc", grown);
        fc = grown;
    } else {
        replace_module("mlp0", grown);
        mlp.front() = grown;
    }
    arch.num_domains += extra;
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

CriticImpl::CriticImpl(const ArchitectureSpec& a) : arch(a) {
    arch.validate();
    if (arch.kind == "conv") {
        conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.image_c, arch.critic_widths[0], 4)
                                             .stride(2)
                                             .padding(1)));
        conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.critic_widths[0], arch.critic_widths[1], 4)
                                             .stride(2)
                                             .padding(1)));
        head = register_module("head", torch::nn::Linear(conv_trunk_shape(arch).flat, 1));
    } else {
        mlp = build_mlp(*this, arch.pixels(), arch.critic_widths, "mlp");
        const int64_t last = arch.critic_widths.empty() ? arch.pixels() : arch.critic_widths.back();
        head = register_module("head", torch::nn::Linear(last, 1));
    }
}

torch::Tensor CriticImpl::forward(const torch::Tensor& x) {
    if (arch.kind == "conv") {
        auto h = run_conv_trunk(conv1, conv2, arch, x);
        return head->forward(h).squeeze(1);
    }
    TORCH_CHECK(x.dim() == 4 && x.size(1) == arch.image_c && x.size(2) == arch.image_h &&
                    x.size(3) == arch.image_w,
                "image batch shape mismatch");
    auto h = run_mlp(mlp, arch.activation, x.flatten(1));
    return head->forward(h).squeeze(1);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

EncoderImpl::EncoderImpl(const ArchitectureSpec& a) : arch(a) {
    arch.validate();
    int64_t feat;
    if (arch.kind == "conv") {
        conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.image_c, arch.enc_widths[0], 4)
                                             .stride(2)
                                             .padding(1)));
        conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.enc_widths[0], arch.enc_widths[1], 4)
                                             .stride(2)
                                             .padding(1)));
        auto s = conv_trunk_shape(arch);
        feat = s.out_h * s.out_w * arch.enc_widths[1];
    } else {
        mlp = build_mlp(*this, arch.pixels(), arch.enc_widths, "mlp");
        feat = arch.enc_widths.empty() ? arch.pixels() : arch.enc_widths.back();
    }
    mu_head = register_module("mu_head", torch::nn::Linear(feat, arch.dim_z));
    log_sigma_head = register_module("log_sigma_head", torch::nn::Linear(feat, arch.dim_z));
}

std::pair<torch::Tensor, torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
    torch::Tensor h;
    if (arch.kind == "conv") {
        h = run_conv_trunk(conv1, conv2, arch, x);
    } else {
        TORCH_CHECK(x.dim() == 4, "image batch expected");
        h = run_mlp(mlp, arch.activation, x.flatten(1));
    }
    auto mu = mu_head->forward(h);
    auto sigma = torch::exp(log_sigma_head->forward(h));
    check_finite(mu, "encoder mu");
    check_finite(sigma, "encoder sigma");
    return {mu, sigma};
}

// ---------------------------------------------------------------------------
// Task head
// ---------------------------------------------------------------------------

TaskHeadImpl::TaskHeadImpl(const ArchitectureSpec& a) : arch(a) {
    arch.validate();
    mlp = build_mlp(*this, arch.dim_z, arch.task_widths, "mlp");
    const int64_t last = arch.task_widths.empty() ? arch.dim_z : arch.task_widths.back();
    head = register_module("head", torch::nn::Linear(last, arch.num_domains));
}

torch::Tensor TaskHeadImpl::forward(const torch::Tensor& z) {
    TORCH_CHECK(z.dim() == 2 && z.size(1) == arch.dim_z, "task head expects [n, dim_z]");
    auto h = run_mlp(mlp, arch.activation, z);
    return head->forward(h);
}

void TaskHeadImpl::expand_output(at::Generator& gen) {
    torch::NoGradGuard ng;
    auto w = head->weight;  // [K, in]
    auto b = head->bias;    // [K]
    const int64_t k = w.size(0), in = w.size(1);
    auto grown = torch::nn::Linear(in, k + 1);
    grown->weight.slice(0, 0, k).copy_(w);
    grown->bias.slice(0, 0, k).copy_(b);
    grown->weight[k] = 0.01 * torch::randn({in}, gen, w.options());
    grown->bias[k] = 0.0;
    replace_module("head", grown);
    head = grown;
    arch.num_domains = k + 1;
}

// ---------------------------------------------------------------------------
// Class head
// ---------------------------------------------------------------------------

ClassHeadImpl::ClassHeadImpl(const ArchitectureSpec& a) : arch(a) {
    arch.validate();
    int64_t feat;
    if (arch.kind == "conv") {
        conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.image_c, arch.cls_widths[0], 4)
                                             .stride(2)
                                             .padding(1)));
        conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                             arch.cls_widths[0], arch.cls_widths[1], 4)
                                             .stride(2)
                                             .padding(1)));
        auto s = conv_trunk_shape(arch);
        feat = s.out_h * s.out_w * arch.cls_widths[1];
    } else {
        mlp = build_mlp(*this, arch.pixels(), arch.cls_widths, "mlp");
        feat = arch.cls_widths.empty() ? arch.pixels() : arch.cls_widths.back();
    }
    head = register_module("head", torch::nn::Linear(feat, arch.num_classes));
}

torch::Tensor ClassHeadImpl::forward(const torch::Tensor& x) {
    torch::Tensor h;
    if (arch.kind == "conv") {
        h = run_conv_trunk(conv1, conv2, arch, x);
    } else {
        TORCH_CHECK(x.dim() == 4, "image batch expected");
        h = run_mlp(mlp, arch.activation, x.flatten(1));
    }
    return head->forward(h);
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

ModelBundle ModelBundle::make(const ArchitectureSpec& arch, uint64_t seed) {
    arch.validate();
    torch::manual_seed(seed);
    ModelBundle b;
    b.arch = arch;
    b.generator = Generator(arch);
    b.critic = Critic(arch);
    b.encoder = Encoder(arch);
    b.task_head = TaskHead(arch);
    b.class_head = ClassHead(arch);
    return b;
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
    torch::NoGradGuard ng;
    auto s = src.parameters();
    auto d = dst.parameters();
    TORCH_CHECK(s.size() == d.size(), "copy_parameters: parameter count mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
        TORCH_CHECK(s[i].sizes() == d[i].sizes(), "copy_parameters: shape mismatch");
        d[i].copy_(s[i]);
    }
}

namespace {
template <typename M>
void copy_params(const M& src, M& dst) {
    copy_parameters(*src, *dst);
}
}  // namespace

ModelBundle ModelBundle::clone() const {
    ModelBundle b;
    b.arch = arch;
    // arch captured at construction reflects any later task-head growth
    auto head_arch = task_head->arch;
    b.generator = Generator(generator->arch);
    b.critic = Critic(arch);
    b.encoder = Encoder(arch);
    b.task_head = TaskHead(head_arch);
    b.class_head = ClassHead(arch);
    copy_params(generator, b.generator);
    copy_params(critic, b.critic);
    copy_params(encoder, b.encoder);
    copy_params(task_head, b.task_head);
    copy_params(class_head, b.class_head);
    return b;
}

std::vector<torch::Tensor> ModelBundle::all_parameters() const {
    std::vector<torch::Tensor> out;
    for (auto& p : generator->parameters()) out.push_back(p);
    for (auto& p : critic->parameters()) out.push_back(p);
    for (auto& p : encoder->parameters()) out.push_back(p);
    for (auto& p : task_head->parameters()) out.push_back(p);
    for (auto& p : class_head->parameters()) out.push_back(p);
    return out;
}

int64_t ModelBundle::parameter_count() const {
    int64_t n = 0;
    for (auto& p : all_parameters()) n += p.numel();
    return n;
}

bool ModelBundle::finite() const {
    for (auto& p : all_parameters())
        if (!all_finite(p)) return false;
    return true;
}

torch::Tensor generate(Generator& g, const torch::Tensor& z, const torch::Tensor& a,
                       const torch::Tensor& c) {
    TORCH_CHECK(z.dim() == 2 && a.dim() == 2, "codes must be 2-D");
    TORCH_CHECK(z.size(0) == a.size(0), "code batch sizes differ");
    torch::Tensor codes;
    if (g->arch.class_conditional) {
        TORCH_CHECK(c.defined() && c.dim() == 2 && c.size(0) == z.size(0),
                    "class code required for a class-conditional generator");
        codes = torch::cat({z, a, c}, 1);
    } else {
        TORCH_CHECK(!c.defined() || c.numel() == 0,
                    "generator is not class-conditional but c was given");
        codes = torch::cat({z, a}, 1);
    }
    return g->forward(codes);
}

torch::Tensor criticize(Critic& critic, const torch::Tensor& x) { return critic->forward(x); }

std::pair<torch::Tensor, torch::Tensor> infer_z(Encoder& enc, const torch::Tensor& x) {
    return enc->forward(x);
}

torch::Tensor infer_task(TaskHead& head, const torch::Tensor& z) { return head->forward(z); }

torch::Tensor infer_class(ClassHead& head, const torch::Tensor& x) { return head->forward(x); }

// ---------------------------------------------------------------------------
// Checkpoints: raw little-endian float32 arrays + json manifest
// ---------------------------------------------------------------------------

void save_module_raw(const torch::nn::Module& m, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    TORCH_CHECK(out.good(), "cannot write ", file.string());
    for (const auto& p : m.parameters()) {
        auto t = p.detach().contiguous();
        TORCH_CHECK(t.dtype() == torch::kFloat32, "checkpoint arrays are float32");
        out.write(static_cast<const char*>(t.data_ptr()), t.numel() * sizeof(float));
    }
    TORCH_CHECK(out.good(), "short write to ", file.string());
}

void load_module_raw(torch::nn::Module& m, const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    TORCH_CHECK(in.good(), "cannot read ", file.string());
    torch::NoGradGuard ng;
    for (auto& p : m.parameters()) {
        auto t = torch::empty_like(p, p.options());
        in.read(static_cast<char*>(t.data_ptr()), t.numel() * sizeof(float));
        TORCH_CHECK(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)),
                    "truncated checkpoint file ", file.string());
        p.copy_(t);
    }
}

namespace {

json arch_to_json(const ArchitectureSpec& a) {
    return json{{"image_h", a.image_h},
                {"image_w", a.image_w},
                {"image_c", a.image_c},
                {"dim_z", a.dim_z},
                {"num_classes", a.num_classes},
                {"num_domains", a.num_domains},
                {"class_conditional", a.class_conditional},
                {"kind", a.kind},
                {"activation", a.activation},
                {"conditioning", a.conditioning},
                {"gen_widths", a.gen_widths},
                {"critic_widths", a.critic_widths},
                {"enc_widths", a.enc_widths},
                {"task_widths", a.task_widths},
                {"cls_widths", a.cls_widths}};
}

ArchitectureSpec arch_from_json(const json& j) {
    ArchitectureSpec a;
    a.image_h = j.at("image_h");
    a.image_w = j.at("image_w");
    a.image_c = j.at("image_c");
    a.dim_z = j.at("dim_z");
    a.num_classes = j.at("num_classes");
    a.num_domains = j.at("num_domains");
    a.class_conditional = j.at("class_conditional");
    a.kind = j.at("kind");
    a.activation = j.at("activation");
    a.conditioning = j.at("conditioning");
    a.gen_widths = j.at("gen_widths").get<std::vector<int64_t>>();
    a.critic_widths = j.at("critic_widths").get<std::vector<int64_t>>();
    a.enc_widths = j.at("enc_widths").get<std::vector<int64_t>>();
    a.task_widths = j.at("task_widths").get<std::vector<int64_t>>();
    a.cls_widths = j.at("cls_widths").get<std::vector<int64_t>>();
    return a;
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["arch"] = arch_to_json(bundle.arch);
    manifest["task_head_domains"] = bundle.task_head->out_dim();
    manifest["generator_domains"] = bundle.generator->arch.num_domains;
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    save_module_raw(*bundle.generator, dir / "generator.bin");
    save_module_raw(*bundle.critic, dir / "critic.bin");
    save_module_raw(*bundle.encoder, dir / "encoder.bin");
    save_module_raw(*bundle.task_head, dir / "task_head.bin");
    save_module_raw(*bundle.class_head, dir / "class_head.bin");
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    TORCH_CHECK(mf.good(), "checkpoint_not_found: ", (dir / "manifest.json").string());
    json manifest = json::parse(mf);
    ModelBundle b;
    b.arch = arch_from_json(manifest.at("arch"));
    auto head_arch = b.arch;
    head_arch.num_domains = manifest.at("task_head_domains");
    auto gen_arch = b.arch;
    gen_arch.num_domains = manifest.at("generator_domains");
    b.generator = Generator(gen_arch);
    b.critic = Critic(b.arch);
    b.encoder = Encoder(b.arch);
    b.task_head = TaskHead(head_arch);
    b.class_head = ClassHead(b.arch);
    load_module_raw(*b.generator, dir / "generator.bin");
    load_module_raw(*b.critic, dir / "critic.bin");
    load_module_raw(*b.encoder, dir / "encoder.bin");
    load_module_raw(*b.task_head, dir / "task_head.bin");
    load_module_raw(*b.class_head, dir / "class_head.bin");
    return b;
}

}  // namespace lvg::nets
