#ifndef LVG_COMMON_HPP
#define LVG_COMMON_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace lvg {

// splitmix64 step; used to fan one master seed out into per-module streams.
inline uint64_t mix_seed(uint64_t master, uint64_t stream) {
    uint64_t x = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline at::Generator cpu_generator(uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    return gen;
}

inline bool all_finite(const torch::Tensor& t) {
    return t.defined() && torch::isfinite(t).all().item<bool>();
}

inline void check_finite(const torch::Tensor& t, const char* what) {
    TORCH_CHECK(all_finite(t), "non-finite values in ", what);
}

// FNV-1a, used for content hashing (train/test disjointness, determinism checks).
inline uint64_t fnv1a(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t tensor_content_hash(const torch::Tensor& t) {
    auto c = t.contiguous();
    return fnv1a(c.data_ptr(), c.numel() * c.element_size());
}

// Append-only CSV file with a fixed header row.
class CsvWriter {
public:
    CsvWriter() = default;
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
        open(path, header);
    }

    void open(const std::filesystem::path& path, const std::vector<std::string>& header) {
        columns_ = header;
        const bool fresh = !std::filesystem::exists(path);
        out_.open(path, std::ios::app);
        TORCH_CHECK(out_.good(), "cannot open csv file ", path.string());
        if (fresh) {
            write_row_raw(header);
        }
    }

    void write_row(const std::vector<std::string>& cells) {
        TORCH_CHECK(cells.size() == columns_.size(), "csv row width mismatch");
        write_row_raw(cells);
    }

    bool is_open() const { return out_.is_open(); }
    const std::vector<std::string>& columns() const { return columns_; }

private:
    void write_row_raw(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
        out_.flush();
    }

    std::ofstream out_;
    std::vector<std::string> columns_;
};

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace lvg

#endif
