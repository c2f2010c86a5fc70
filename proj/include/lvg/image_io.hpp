#ifndef LVG_IMAGE_IO_HPP
#define LVG_IMAGE_IO_HPP

#include <torch/torch.h>

#include <filesystem>

namespace lvg::image_io {

// 8-bit PNG, grayscale or RGB. Accepts [h,w], [1,h,w], [3,h,w] or [h,w,3]
// float tensors with values in [0,1].
void write_png(const std::filesystem::path& file, const torch::Tensor& image);

// Tiles a batch [n,c,h,w] into one [c,H,W] image with `pad` background pixels
// between cells.
torch::Tensor tile_grid(const torch::Tensor& images, int64_t cols, int64_t pad = 2);

}  // namespace lvg::image_io

#endif
