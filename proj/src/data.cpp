#include "lvg/data.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "lvg/common.hpp"

namespace lvg::data {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Procedural task rendering
// ---------------------------------------------------------------------------

namespace {

// 5x7 dot-matrix digit glyphs
const std::array<std::array<const char*, 7>, 10> kDigitGlyphs = {{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
}};

// 8x8 clothing-like silhouettes: top, trouser, pullover, dress, coat,
// sandal, shirt, sneaker, bag, ankle boot
const std::array<std::array<const char*, 8>, 10> kFashionGlyphs = {{
    {"11100111", "11111111", "10111101", "00111100", "00111100", "00111100", "00111100",
     "00111100"},
    {"01111110", "01111110", "01100110", "01100110", "01100110", "01100110", "01100110",
     "01100110"},
    {"11111111", "11111111", "11011011", "11011011", "11011011", "00111100", "00111100",
     "00111100"},
    {"00011000", "00111100", "00111100", "00111100", "01111110", "01111110", "11111111",
     "11111111"},
    {"11111111", "11101111", "11101111", "11101111", "11101111", "11101111", "11101111",
     "11111111"},
    {"00000000", "00000011", "00001100", "00110000", "11111111", "10101011", "11111111",
     "00000000"},
    {"11011011", "11100111", "11111111", "01111010", "00111100", "00101100", "00111100",
     "00101100"},
    {"00000000", "00000000", "00000111", "00001111", "11111111", "11111111", "11111111",
     "00000000"},
    {"00111100", "01000010", "01000010", "11111111", "11111111", "11111111", "11111111",
     "11111111"},
    {"00111100", "00111100", "00111100", "00111110", "00111111", "01111111", "11111111",
     "11111110"},
}};

struct Affine {
    // canvas -> glyph-box coordinates (inverse transform), about the canvas center
    double m00, m01, m10, m11, tx, ty;
};

double sample_glyph(const char* const* rows, int gh, int gw, double u, double v) {
    // bilinear interpolation over cell centers; outside the box -> 0
    const double x = u * gw - 0.5;
    const double y = v * gh - 0.5;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    auto at = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= gh || xx < 0 || xx >= gw) return 0.0;
        return rows[yy][xx] == '1' ? 1.0 : 0.0;
    };
    const double fx = x - x0, fy = y - y0;
    return at(y0, x0) * (1 - fx) * (1 - fy) + at(y0, x0 + 1) * fx * (1 - fy) +
           at(y0 + 1, x0) * (1 - fx) * fy + at(y0 + 1, x0 + 1) * fx * fy;
}

void blur3(std::vector<float>& img, int h, int w) {
    std::vector<float> tmp(img.size());
    auto px = [&](const std::vector<float>& a, int i, int j) -> float {
        i = std::clamp(i, 0, h - 1);
        j = std::clamp(j, 0, w - 1);
        return a[i * w + j];
    };
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            tmp[i * w + j] =
                0.25f * px(img, i, j - 1) + 0.5f * px(img, i, j) + 0.25f * px(img, i, j + 1);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            img[i * w + j] =
                0.25f * px(tmp, i - 1, j) + 0.5f * px(tmp, i, j) + 0.25f * px(tmp, i + 1, j);
}

Dataset render_glyph_set(int64_t n, uint64_t seed, bool fashion) {
    constexpr int H = 28, W = 28;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto images = torch::empty({n, 1, H, W}, torch::kFloat32);
    auto labels = torch::empty({n}, torch::kLong);
    auto la = labels.accessor<int64_t, 1>();
    float* base = images.data_ptr<float>();

    for (int64_t s = 0; s < n; ++s) {
        const int cls = static_cast<int>(s % 10);
        la[s] = cls;
        // jittered affine placement of the glyph box
        const double rot = (uni(rng) - 0.5) * (fashion ? 0.25 : 0.45);
        const double scale = (fashion ? 0.95 : 0.9) + (uni(rng) - 0.5) * 0.25;
        const double shear = (uni(rng) - 0.5) * 0.2;
        const double shift_x = (uni(rng) - 0.5) * 5.0;
        const double shift_y = (uni(rng) - 0.5) * 5.0;
        const double box_w = (fashion ? 19.0 : 15.0) * scale;
        const double box_h = (fashion ? 19.0 : 20.0) * scale;
        const double stroke = fashion ? 0.6 + 0.35 * uni(rng) : 0.75 + 0.25 * uni(rng);
        const double texture = fashion ? 0.25 : 0.0;
        const double cosr = std::cos(rot), sinr = std::sin(rot);

        std::vector<float> canvas(H * W, 0.0f);
        const double cx = W / 2.0 + shift_x, cy = H / 2.0 + shift_y;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                // rotate about the glyph center, then normalize into the box
                const double dx = (j + 0.5) - cx;
                const double dy = (i + 0.5) - cy;
                const double gx = cosr * dx + sinr * dy + shear * dy;
                const double gy = -sinr * dx + cosr * dy;
                const double u = gx / box_w + 0.5;
                const double v = gy / box_h + 0.5;
                if (u < -0.1 || u > 1.1 || v < -0.1 || v > 1.1) continue;
                double val;
                if (fashion)
                    val = sample_glyph(kFashionGlyphs[cls].data(), 8, 8, u, v);
                else
                    val = sample_glyph(kDigitGlyphs[cls].data(), 7, 5, u, v);
                if (val <= 0.0) continue;
                double tex = 1.0;
                if (texture > 0.0)
                    tex = 1.0 - texture * 0.5 * (1.0 + std::sin(9.0 * u + 7.0 * v + 3.0 * cls));
                canvas[i * W + j] = static_cast<float>(val * stroke * tex);
            }
        }
        blur3(canvas, H, W);
        float* out = base + s * H * W;
        for (int p = 0; p < H * W; ++p) {
            const double noisy = canvas[p] + 0.02 * gauss(rng);
            out[p] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    }
    // fixed per-set permutation so classes are not block-ordered
    auto perm = torch::randperm(n, cpu_generator(mix_seed(seed, 0x9e)), torch::kLong);
    return {images.index_select(0, perm), labels.index_select(0, perm)};
}

}  // namespace

Dataset make_synth_digits(int64_t n, uint64_t seed) { return render_glyph_set(n, seed, false); }
Dataset make_synth_fashion(int64_t n, uint64_t seed) { return render_glyph_set(n, seed, true); }

// ---------------------------------------------------------------------------
// On-disk datasets
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto img = ds.images.contiguous();
    auto lab = ds.labels.to(torch::kLong).contiguous();
    {
        std::ofstream f(dir / "images.bin", std::ios::binary);
        TORCH_CHECK(f.good(), "cannot write ", (dir / "images.bin").string());
        f.write(static_cast<const char*>(img.data_ptr()), img.numel() * sizeof(float));
    }
    {
        std::ofstream f(dir / "labels.bin", std::ios::binary);
        f.write(static_cast<const char*>(lab.data_ptr()), lab.numel() * sizeof(int64_t));
    }
    json m;
    m["dtype"] = "float32";
    m["labels_dtype"] = "int64";
    m["shape"] = {img.size(0), img.size(1), img.size(2), img.size(3)};
    m["count"] = img.size(0);
    std::ofstream mf(dir / "manifest.json");
    mf << m.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    TORCH_CHECK(mf.good(), "dataset manifest missing: ", dir.string());
    json m = json::parse(mf);
    auto shape = m.at("shape").get<std::vector<int64_t>>();
    TORCH_CHECK(shape.size() == 4, "dataset shape must be [n, c, h, w]");
    const std::string dtype = m.at("dtype");
    const int64_t n = shape[0];
    auto images = torch::empty(shape, torch::kFloat32);
    {
        std::ifstream f(dir / "images.bin", std::ios::binary);
        TORCH_CHECK(f.good(), "dataset images missing: ", dir.string());
        if (dtype == "float32") {
            f.read(static_cast<char*>(images.data_ptr()), images.numel() * sizeof(float));
            TORCH_CHECK(f.gcount() ==
                            static_cast<std::streamsize>(images.numel() * sizeof(float)),
                        "truncated images.bin");
        } else if (dtype == "uint8") {
            std::vector<uint8_t> buf(images.numel());
            f.read(reinterpret_cast<char*>(buf.data()), buf.size());
            TORCH_CHECK(f.gcount() == static_cast<std::streamsize>(buf.size()),
                        "truncated images.bin");
            float* out = images.data_ptr<float>();
            for (size_t i = 0; i < buf.size(); ++i) out[i] = buf[i] / 255.0f;
        } else {
            TORCH_CHECK(false, "unsupported dataset dtype: ", dtype);
        }
    }
    auto labels = torch::empty({n}, torch::kLong);
    {
        std::ifstream f(dir / "labels.bin", std::ios::binary);
        TORCH_CHECK(f.good(), "dataset labels missing: ", dir.string());
        f.read(static_cast<char*>(labels.data_ptr()), n * sizeof(int64_t));
        TORCH_CHECK(f.gcount() == static_cast<std::streamsize>(n * sizeof(int64_t)),
                    "truncated labels.bin");
    }
    return {images, labels};
}

// ---------------------------------------------------------------------------
// IDX import (plain or gzip)
// ---------------------------------------------------------------------------

namespace {

std::vector<uint8_t> read_all_maybe_gz(const std::filesystem::path& file) {
    gzFile f = gzopen(file.string().c_str(), "rb");
    TORCH_CHECK(f != nullptr, "cannot open ", file.string());
    std::vector<uint8_t> out;
    std::array<uint8_t, 1 << 16> buf;
    int got;
    while ((got = gzread(f, buf.data(), buf.size())) > 0)
        out.insert(out.end(), buf.data(), buf.data() + got);
    gzclose(f);
    TORCH_CHECK(got == 0, "error reading ", file.string());
    return out;
}

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

}  // namespace

Dataset import_idx(const std::filesystem::path& images_file,
                   const std::filesystem::path& labels_file) {
    auto ibuf = read_all_maybe_gz(images_file);
    TORCH_CHECK(ibuf.size() >= 16 && be32(ibuf.data()) == 0x00000803,
                "not an IDX3 image file: ", images_file.string());
    const int64_t n = be32(ibuf.data() + 4);
    const int64_t h = be32(ibuf.data() + 8);
    const int64_t w = be32(ibuf.data() + 12);
    TORCH_CHECK(static_cast<int64_t>(ibuf.size()) == 16 + n * h * w,
                "corrupt IDX image payload");
    auto lbuf = read_all_maybe_gz(labels_file);
    TORCH_CHECK(lbuf.size() >= 8 && be32(lbuf.data()) == 0x00000801,
                "not an IDX1 label file: ", labels_file.string());
    TORCH_CHECK(static_cast<int64_t>(be32(lbuf.data() + 4)) == n,
                "IDX image/label count mismatch");

    auto images = torch::empty({n, 1, h, w}, torch::kFloat32);
    float* out = images.data_ptr<float>();
    const uint8_t* src = ibuf.data() + 16;
    for (int64_t i = 0; i < n * h * w; ++i) out[i] = src[i] / 255.0f;
    auto labels = torch::empty({n}, torch::kLong);
    auto la = labels.accessor<int64_t, 1>();
    for (int64_t i = 0; i < n; ++i) la[i] = lbuf[8 + i];
    return {images, labels};
}

// ---------------------------------------------------------------------------
// Task resolution
// ---------------------------------------------------------------------------

Dataset resize_dataset(const Dataset& ds, int64_t h, int64_t w) {
    if (ds.images.size(2) == h && ds.images.size(3) == w) return ds;
    namespace F = torch::nn::functional;
    auto resized = F::interpolate(ds.images, F::InterpolateFuncOptions()
                                                 .size(std::vector<int64_t>{h, w})
                                                 .mode(torch::kBilinear)
                                                 .align_corners(false));
    return {resized.clamp(0.0, 1.0), ds.labels};
}

namespace {

void check_disjoint(const Dataset& train, const Dataset& test, const std::string& name) {
    std::unordered_set<uint64_t> seen;
    auto img = train.images.contiguous();
    const int64_t bytes = img.size(1) * img.size(2) * img.size(3) * sizeof(float);
    const char* p = static_cast<const char*>(img.data_ptr());
    for (int64_t i = 0; i < img.size(0); ++i) seen.insert(fnv1a(p + i * bytes, bytes));
    auto timg = test.images.contiguous();
    const char* q = static_cast<const char*>(timg.data_ptr());
    for (int64_t i = 0; i < timg.size(0); ++i)
        TORCH_CHECK(!seen.count(fnv1a(q + i * bytes, bytes)),
                    "train/test overlap detected in task ", name);
}

}  // namespace

std::pair<Dataset, Dataset> load_task(const std::string& name_or_dir, const LoadOptions& opts) {
    Dataset train, test;
    std::filesystem::path dir = name_or_dir;
    if (!std::filesystem::exists(dir)) {
        std::string root = opts.data_root;
        if (root.empty())
            if (const char* env = std::getenv("LVG_DATA_ROOT")) root = env;
        if (!root.empty() && std::filesystem::exists(std::filesystem::path(root) / name_or_dir))
            dir = std::filesystem::path(root) / name_or_dir;
    }
    if (std::filesystem::exists(dir / "train" / "manifest.json")) {
        train = load_dataset(dir / "train");
        test = load_dataset(dir / "test");
    } else if (name_or_dir == "digits" || name_or_dir == "mnist") {
        train = make_synth_digits(opts.synth_train, mix_seed(opts.synth_seed, 0x11));
        test = make_synth_digits(opts.synth_test, mix_seed(opts.synth_seed, 0x22));
    } else if (name_or_dir == "fashion") {
        train = make_synth_fashion(opts.synth_train, mix_seed(opts.synth_seed, 0x33));
        test = make_synth_fashion(opts.synth_test, mix_seed(opts.synth_seed, 0x44));
    } else {
        TORCH_CHECK(false, "task_not_found: ", name_or_dir,
                    " (no dataset directory and no such built-in task)");
    }
    TORCH_CHECK(train.size() > 0 && test.size() > 0, "empty dataset for task ", name_or_dir);
    TORCH_CHECK(train.images.min().item<float>() >= 0.0f &&
                    train.images.max().item<float>() <= 1.0f,
                "pixels must lie in [0,1] after load");
    train = resize_dataset(train, opts.target_h, opts.target_w);
    test = resize_dataset(test, opts.target_h, opts.target_w);
    check_disjoint(train, test, name_or_dir);
    return {train, test};
}

TaskStream make_stream(const std::vector<std::string>& names, const LoadOptions& opts) {
    TORCH_CHECK(!names.empty(), "task stream needs at least one task");
    TaskStream stream;
    stream.image_h = opts.target_h;
    stream.image_w = opts.target_w;
    uint64_t salt = 0;
    for (const auto& name : names) {
        auto local = opts;
        local.synth_seed = mix_seed(opts.synth_seed, 0x100 + salt++);
        auto [train, test] = load_task(name, local);
        const int64_t arity =
            std::max<int64_t>(train.labels.max().item<int64_t>() + 1, 10);
        stream.tasks.push_back({name, train, test, arity});
    }
    return stream;
}

// ---------------------------------------------------------------------------
// Splits and batching
// ---------------------------------------------------------------------------

SemiSplit make_semi_split(const Dataset& train, int64_t n_labelled, uint64_t seed) {
    TORCH_CHECK(n_labelled >= 1, "n_labelled must be >= 1");
    TORCH_CHECK(n_labelled <= train.size(), "n_labelled exceeds the training set");
    const int64_t arity = train.labels.max().item<int64_t>() + 1;
    std::vector<std::vector<int64_t>> by_class(arity);
    auto la = train.labels.accessor<int64_t, 1>();
    for (int64_t i = 0; i < train.size(); ++i) by_class[la[i]].push_back(i);

    // per-class quotas differing by at most one, extras to the lowest classes
    const int64_t base = n_labelled / arity;
    const int64_t extra = n_labelled % arity;
    std::vector<int64_t> lab_idx, unlab_idx;
    for (int64_t c = 0; c < arity; ++c) {
        auto& pool = by_class[c];
        std::mt19937_64 rng(mix_seed(seed, 0x700 + c));
        std::shuffle(pool.begin(), pool.end(), rng);
        const int64_t quota = base + (c < extra ? 1 : 0);
        TORCH_CHECK(static_cast<int64_t>(pool.size()) >= quota,
                    "class ", c, " too small for a balanced labelled split");
        for (int64_t i = 0; i < static_cast<int64_t>(pool.size()); ++i)
            (i < quota ? lab_idx : unlab_idx).push_back(pool[i]);
    }
    std::sort(lab_idx.begin(), lab_idx.end());
    std::sort(unlab_idx.begin(), unlab_idx.end());
    auto to_tensor = [](const std::vector<int64_t>& v) {
        return torch::tensor(v, torch::kLong);
    };
    SemiSplit split;
    split.seed = seed;
    split.labelled = {train.images.index_select(0, to_tensor(lab_idx)),
                      train.labels.index_select(0, to_tensor(lab_idx))};
    split.unlabelled = {train.images.index_select(0, to_tensor(unlab_idx)),
                        train.labels.index_select(0, to_tensor(unlab_idx))};
    return split;
}

std::vector<torch::Tensor> epoch_batches(int64_t n, int64_t batch_size, uint64_t seed) {
    TORCH_CHECK(batch_size >= 1, "batch size must be >= 1");
    auto gen = cpu_generator(seed);
    auto perm = torch::randperm(n, gen, torch::kLong);
    std::vector<torch::Tensor> out;
    for (int64_t start = 0; start < n; start += batch_size)
        out.push_back(perm.slice(0, start, std::min(n, start + batch_size)));
    return out;
}

torch::Tensor onehot(const torch::Tensor& labels, int64_t arity) {
    auto out = torch::zeros({labels.size(0), arity}, torch::kFloat32);
    out.scatter_(1, labels.view({-1, 1}), 1.0);
    return out;
}

losses::SourceBatch gather(const Dataset& ds, const torch::Tensor& idx, int64_t label_arity,
                           int64_t domain_index, int64_t num_domains) {
    losses::SourceBatch b;
    b.x = ds.images.index_select(0, idx);
    if (ds.labels.defined() && label_arity > 0)
        b.y = onehot(ds.labels.index_select(0, idx), label_arity);
    if (num_domains > 0) {
        auto a = torch::zeros({idx.size(0), num_domains}, torch::kFloat32);
        a.index_put_({torch::indexing::Slice(), domain_index}, 1.0);
        b.a = a;
    }
    return b;
}

}  // namespace lvg::data
