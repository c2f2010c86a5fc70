#ifndef LVG_NETS_HPP
#define LVG_NETS_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/common.hpp"

namespace lvg::nets {

// Shape and capacity descriptors for the five networks. The codes (z, a, c)
// are concatenated into a single vector at the generator input; the critic
// sees images only.
struct ArchitectureSpec {
    int64_t image_h = 28;
    int64_t image_w = 28;
    int64_t image_c = 1;
    int64_t dim_z = 8;
    int64_t num_classes = 10;  // L
    int64_t num_domains = 1;   // K at construction time
    bool class_conditional = true;  // false: generator conditioned on (z, a) only

    std::string kind = "conv";  // "conv" | "mlp"
    std::string activation = "relu";
    std::string conditioning = "concat-input";

    // conv: channel counts; mlp: hidden layer widths. Empty critic/encoder
    // widths in mlp mode give a single linear map.
    std::vector<int64_t> gen_widths = {64, 32};
    std::vector<int64_t> critic_widths = {32, 64};
    std::vector<int64_t> enc_widths = {32, 64};
    std::vector<int64_t> task_widths = {32};
    std::vector<int64_t> cls_widths = {32, 64};

    int64_t pixels() const { return image_h * image_w * image_c; }
    int64_t code_dim() const {
        return dim_z + num_domains + (class_conditional ? num_classes : 0);
    }
    void validate() const;
    bool operator==(const ArchitectureSpec&) const = default;
};

torch::Tensor make_activation(const std::string& name, const torch::Tensor& x);

// Generator p_theta(x | z, a, c): code vector in, image batch in [0,1] out.
struct GeneratorImpl : torch::nn::Module {
    GeneratorImpl(const ArchitectureSpec& arch);
    torch::Tensor forward(const torch::Tensor& codes);
    // Grows the input layer by `extra` columns at `offset` (new domain units);
    // existing weight columns are preserved bit-exact.
    void expand_code_input(int64_t offset, int64_t extra, at::Generator& gen);

    ArchitectureSpec arch;
    torch::nn::Linear fc{nullptr};
    torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
    std::vector<torch::nn::Linear> mlp;
    int64_t base_h = 0, base_w = 0;
};
TORCH_MODULE(Generator);

// Wasserstein critic: image batch in, unbounded scalar score per sample out.
struct CriticImpl : torch::nn::Module {
    CriticImpl(const ArchitectureSpec& arch);
    torch::Tensor forward(const torch::Tensor& x);

    ArchitectureSpec arch;
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    std::vector<torch::nn::Linear> mlp;
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Critic);

// q_sigma(z|x): trunk mirroring the critic with two linear heads. The sigma
// head outputs log(sigma), mapped through exp so sigma > 0 always; a
// zero-initialized head therefore yields sigma = 1 exactly.
struct EncoderImpl : torch::nn::Module {
    EncoderImpl(const ArchitectureSpec& arch);
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);  // (mu, sigma)

    ArchitectureSpec arch;
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    std::vector<torch::nn::Linear> mlp;
    torch::nn::Linear mu_head{nullptr}, log_sigma_head{nullptr};
};
TORCH_MODULE(Encoder);

// q_epsilon(a|z): task-inference head, z in, K logits out. The output layer
// grows by one unit per new task.
struct TaskHeadImpl : torch::nn::Module {
    TaskHeadImpl(const ArchitectureSpec& arch);
    torch::Tensor forward(const torch::Tensor& z);
    // K -> K+1; existing rows preserved bit-exact, the new row starts small.
    void expand_output(at::Generator& gen);
    int64_t out_dim() const { return head->weight.size(0); }

    ArchitectureSpec arch;
    std::vector<torch::nn::Linear> mlp;
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(TaskHead);

// q_delta(c|x): class-inference head, image in, L logits out.
struct ClassHeadImpl : torch::nn::Module {
    ClassHeadImpl(const ArchitectureSpec& arch);
    torch::Tensor forward(const torch::Tensor& x);

    ArchitectureSpec arch;
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    std::vector<torch::nn::Linear> mlp;
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ClassHead);

// The five parameter sets: generator theta, critic omega, z-encoder varsigma,
// task head epsilon, class head delta.
struct ModelBundle {
    ArchitectureSpec arch;
    Generator generator{nullptr};
    Critic critic{nullptr};
    Encoder encoder{nullptr};
    TaskHead task_head{nullptr};
    ClassHead class_head{nullptr};

    static ModelBundle make(const ArchitectureSpec& arch, uint64_t seed);
    ModelBundle clone() const;
    int64_t parameter_count() const;
    bool finite() const;
    std::vector<torch::Tensor> all_parameters() const;
};

// Forward contracts. `c` may be an undefined tensor when the generator is not
// class-conditional.
torch::Tensor generate(Generator& g, const torch::Tensor& z, const torch::Tensor& a,
                       const torch::Tensor& c = {});
torch::Tensor criticize(Critic& critic, const torch::Tensor& x);
std::pair<torch::Tensor, torch::Tensor> infer_z(Encoder& enc, const torch::Tensor& x);
torch::Tensor infer_task(TaskHead& head, const torch::Tensor& z);
torch::Tensor infer_class(ClassHead& head, const torch::Tensor& x);

// Checkpoint directory: one raw float32 array file per network plus a
// structured-text manifest; round-trips bit-exact.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

void save_module_raw(const torch::nn::Module& m, const std::filesystem::path& file);
void load_module_raw(torch::nn::Module& m, const std::filesystem::path& file);

// Copies parameter values between structurally identical modules.
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace lvg::nets

#endif
