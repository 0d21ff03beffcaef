#include "rdb/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "rdb/error.hpp"

namespace rdb {

void validate_frame(const ImageFrame& image) {
  require(image.pixels.size() == static_cast<std::size_t>(ImageFrame::kValues),
          ErrorCode::kDimension, "image frame must be 64x64x3");
  for (float v : image.pixels) {
    require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrorCode::kRange,
            "image frame values must lie in [0,1]");
  }
}

namespace {

RawImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(ErrorCode::kIo, "cannot read png " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RawImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorCode::kIo, "cannot decode png " + path.string() + ": " + img.message);
  }
  return out;
}

RawImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(magic == "P6" && w > 0 && h > 0 && maxval == 255, ErrorCode::kParse,
          "unsupported ppm header in " + path.string());
  in.get();
  RawImage out(w, h);
  in.read(reinterpret_cast<char*>(out.rgb.data()),
          static_cast<std::streamsize>(out.rgb.size()));
  require(in.gcount() == static_cast<std::streamsize>(out.rgb.size()),
          ErrorCode::kParse, "truncated ppm " + path.string());
  return out;
}

png_image make_write_header(const RawImage& image) {
  require(!image.empty(), ErrorCode::kInvalidArgument, "cannot write empty image");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  return img;
}

}  // namespace

RawImage read_image(const std::filesystem::path& path) {
  if (path.extension() == ".ppm") return read_ppm(path);
  return read_png(path);
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  png_image img = make_write_header(image);
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0,
                               nullptr)) {
    fail(ErrorCode::kIo, "cannot write png " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> encode_png(const RawImage& image) {
  png_image img = make_write_header(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0,
                                 nullptr)) {
    fail(ErrorCode::kIo, std::string("png encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> buffer(size);
  if (!png_image_write_to_memory(&img, buffer.data(), &size, 0,
                                 image.rgb.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("png encode failed: ") + img.message);
  }
  buffer.resize(size);
  return buffer;
}

double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

namespace {

int luminance_bin(double y) {
  return std::clamp(static_cast<int>(std::lround(y)), 0, 255);
}

// Per-region shift table: lut[b] - b.
std::array<double, 256> region_shift(const std::vector<double>& lum, int width,
                                     int x0, int x1, int y0, int y1,
                                     double clip_limit) {
  std::array<double, 256> hist{};
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      hist[luminance_bin(lum[static_cast<std::size_t>(y) * width + x])] += 1.0;
    }
  }
  const double count = static_cast<double>((x1 - x0) * (y1 - y0));
  std::array<double, 256> shift{};
  int occupied = 0;
  for (double h : hist) occupied += h > 0.0 ? 1 : 0;
  if (occupied <= 1 || count <= 0.0) return shift;

  if (clip_limit > 0.0) {
    const double limit = std::max(1.0, clip_limit * count / 256.0);
    double excess = 0.0;
    for (double& h : hist) {
      if (h > limit) {
        excess += h - limit;
        h = limit;
      }
    }
    const double spread = excess / 256.0;
    for (double& h : hist) h += spread;
  }
  double cdf = 0.0;
  for (int b = 0; b < 256; ++b) {
    cdf += hist[b];
    shift[b] = cdf * 255.0 / count - b;
  }
  return shift;
}

}  // namespace

RgbImage clahe(const RawImage& image, int tiles, double clip_limit) {
  require(!image.empty(), ErrorCode::kInvalidArgument, "zero-size image");
  require(tiles >= 1, ErrorCode::kInvalidArgument, "CLAHE needs at least one tile");
  const int w = image.width;
  const int h = image.height;
  const int tx_count = std::min(tiles, w);
  const int ty_count = std::min(tiles, h);
  const double tile_w = static_cast<double>(w) / tx_count;
  const double tile_h = static_cast<double>(h) / ty_count;

  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = image.pixel(y, x);
      lum[static_cast<std::size_t>(y) * w + x] = luminance(p[0], p[1], p[2]);
    }
  }

  std::vector<std::array<double, 256>> shifts(
      static_cast<std::size_t>(tx_count) * ty_count);
  for (int ty = 0; ty < ty_count; ++ty) {
    const int y0 = static_cast<int>(std::floor(ty * tile_h));
    const int y1 = ty + 1 == ty_count ? h : static_cast<int>(std::floor((ty + 1) * tile_h));
    for (int tx = 0; tx < tx_count; ++tx) {
      const int x0 = static_cast<int>(std::floor(tx * tile_w));
      const int x1 = tx + 1 == tx_count ? w : static_cast<int>(std::floor((tx + 1) * tile_w));
      shifts[static_cast<std::size_t>(ty) * tx_count + tx] =
          region_shift(lum, w, x0, x1, y0, y1, clip_limit);
    }
  }

  RgbImage out;
  out.width = w;
  out.height = h;
  out.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    const double gy = (y + 0.5) / tile_h - 0.5;
    const int ya = std::clamp(static_cast<int>(std::floor(gy)), 0, ty_count - 1);
    const int yb = std::min(ya + 1, ty_count - 1);
    const double fy = std::clamp(gy - ya, 0.0, 1.0);
    for (int x = 0; x < w; ++x) {
      const double gx = (x + 0.5) / tile_w - 0.5;
      const int xa = std::clamp(static_cast<int>(std::floor(gx)), 0, tx_count - 1);
      const int xb = std::min(xa + 1, tx_count - 1);
      const double fx = std::clamp(gx - xa, 0.0, 1.0);
      const double l = lum[static_cast<std::size_t>(y) * w + x];
      const int bin = luminance_bin(l);
      auto at = [&](int ty, int tx) {
        return shifts[static_cast<std::size_t>(ty) * tx_count + tx][bin];
      };
      const double delta = (1.0 - fy) * ((1.0 - fx) * at(ya, xa) + fx * at(ya, xb)) +
                           fy * ((1.0 - fx) * at(yb, xa) + fx * at(yb, xb));
      const std::uint8_t* p = image.pixel(y, x);
      double* q = out.rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3;
      for (int c = 0; c < 3; ++c) q[c] = std::clamp(p[c] + delta, 0.0, 255.0);
    }
  }
  return out;
}

namespace {

// Coverage weights of source cells [0, src) onto dst equal-width bins.
std::vector<std::vector<std::pair<int, double>>> area_weights(int src, int dst) {
  std::vector<std::vector<std::pair<int, double>>> weights(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    const double lo = d * scale;
    const double hi = (d + 1) * scale;
    for (int s = static_cast<int>(std::floor(lo)); s < src && s < hi; ++s) {
      const double cover = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      if (cover > 0.0) weights[d].emplace_back(s, cover / scale);
    }
  }
  return weights;
}

}  // namespace

ImageFrame resize_area(const RgbImage& image, int frame) {
  require(image.width > 0 && image.height > 0, ErrorCode::kInvalidArgument,
          "zero-size image");
  constexpr int n = ImageFrame::kSize;
  const auto wx = area_weights(image.width, n);
  const auto wy = area_weights(image.height, n);
  ImageFrame out;
  out.frame = frame;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (auto [sy, vy] : wy[y]) {
        for (auto [sx, vx] : wx[x]) {
          const double* p =
              image.rgb.data() + (static_cast<std::size_t>(sy) * image.width + sx) * 3;
          for (int c = 0; c < 3; ++c) acc[c] += vy * vx * p[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) =
            static_cast<float>(std::clamp(acc[c] / 255.0, 0.0, 1.0));
      }
    }
  }
  return out;
}

ImageFrame preprocess_frame(const RawImage& raw, int tiles, double clip_limit,
                            int frame) {
  require(!raw.empty() &&
              raw.rgb.size() == static_cast<std::size_t>(raw.width) * raw.height * 3,
          ErrorCode::kInvalidArgument, "zero-size image");
  return resize_area(clahe(raw, tiles, clip_limit), frame);
}

}  // namespace rdb
