#ifndef RDB_IMAGE_HPP_
#define RDB_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rdb {

// 8-bit RGB raster, row-major, interleaved (HWC).
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RawImage() = default;
  RawImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t* pixel(int y, int x) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int y, int x) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

// Preprocessed scene image: 64x64x3, values in [0,1]. Stored channel-planar
// (c * 64 * 64 + y * 64 + x) because that is the layout the encoder consumes.
struct ImageFrame {
  static constexpr int kSize = 64;
  static constexpr int kChannels = 3;
  static constexpr int kValues = kSize * kSize * kChannels;

  int frame = 0;
  std::vector<float> pixels = std::vector<float>(kValues, 0.0f);

  float at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>(c) * kSize * kSize + y * kSize + x];
  }
  float& at(int y, int x, int c) {
    return pixels[static_cast<std::size_t>(c) * kSize * kSize + y * kSize + x];
  }
};

// Throws unless shape is 64x64x3 and every value lies in [0,1].
void validate_frame(const ImageFrame& image);

RawImage read_image(const std::filesystem::path& path);  // .png or .ppm
void write_png(const std::filesystem::path& path, const RawImage& image);
std::vector<std::uint8_t> encode_png(const RawImage& image);

// Floating-point RGB image in [0,255], interleaved; intermediate of the
// preprocessing chain.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
};

double luminance(double r, double g, double b);

// Contrast limited adaptive histogram equalisation on the luminance channel.
// The image is split into tiles x tiles regions; each region's 256-bin
// luminance histogram is clipped at clip_limit * (pixels / 256) (clip_limit
// <= 0 disables clipping), the excess is spread evenly over all bins, and the
// resulting CDFs are bilinearly interpolated between region centres. The
// luminance shift is added to all three channels, which keeps chroma fixed.
// Regions holding a single grey level map to themselves.
RgbImage clahe(const RawImage& image, int tiles, double clip_limit);

// Area-averaging resize to size x size, scaled from [0,255] to [0,1].
ImageFrame resize_area(const RgbImage& image, int frame = 0);

// CLAHE followed by 64x64 area resize.
ImageFrame preprocess_frame(const RawImage& raw, int tiles = 8,
                            double clip_limit = 2.0, int frame = 0);

}  // namespace rdb

#endif  // RDB_IMAGE_HPP_
