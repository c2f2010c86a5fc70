#include "lvg/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace lvg::image_io {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> len;
    put_be32(len, static_cast<uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(len.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), data.size());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<uint8_t> crcb;
    put_be32(crcb, static_cast<uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(crcb.data()), 4);
}

}  // namespace

void write_png(const std::filesystem::path& file, const torch::Tensor& image) {
    auto img = image.detach().to(torch::kFloat32).contiguous();
    if (img.dim() == 2) img = img.unsqueeze(0);               // [1,h,w]
    if (img.dim() == 3 && img.size(2) == 3 && img.size(0) != 1 && img.size(0) != 3)
        img = img.permute({2, 0, 1}).contiguous();            // [h,w,3] -> [3,h,w]
    TORCH_CHECK(img.dim() == 3 && (img.size(0) == 1 || img.size(0) == 3),
                "write_png expects a grayscale or RGB image");
    const int64_t channels = img.size(0), h = img.size(1), w = img.size(2);
    auto bytes = (img.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8);
    auto hwc = bytes.permute({1, 2, 0}).contiguous();

    // filter byte 0 + raw scanline
    std::vector<uint8_t> raw;
    raw.reserve(h * (1 + w * channels));
    const uint8_t* p = hwc.data_ptr<uint8_t>();
    for (int64_t y = 0; y < h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), p + y * w * channels, p + (y + 1) * w * channels);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    TORCH_CHECK(compress2(compressed.data(), &bound, raw.data(),
                          static_cast<uLong>(raw.size()), 9) == Z_OK,
                "png deflate failed");
    compressed.resize(bound);

    std::ofstream f(file, std::ios::binary);
    TORCH_CHECK(f.good(), "cannot write ", file.string());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(w));
    put_be32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);          // gray / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(f, "IHDR", ihdr);
    write_chunk(f, "IDAT", compressed);
    write_chunk(f, "IEND", {});
}

torch::Tensor tile_grid(const torch::Tensor& images, int64_t cols, int64_t pad) {
    TORCH_CHECK(images.dim() == 4 && images.size(0) >= 1, "tile_grid expects [n,c,h,w]");
    TORCH_CHECK(cols >= 1, "cols must be >= 1");
    const int64_t n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
    const int64_t rows = (n + cols - 1) / cols;
    auto canvas = torch::zeros({c, rows * (h + pad) + pad, cols * (w + pad) + pad},
                               images.options());
    for (int64_t i = 0; i < n; ++i) {
        const int64_t r = i / cols, q = i % cols;
        canvas
            .slice(1, pad + r * (h + pad), pad + r * (h + pad) + h)
            .slice(2, pad + q * (w + pad), pad + q * (w + pad) + w)
            .copy_(images[i]);
    }
    return canvas;
}

}  // namespace lvg::image_io
