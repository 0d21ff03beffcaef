#include "rdb/svg.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "rdb/synthetic.hpp"

namespace rdb {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

std::string image_element(const RawImage& img, double x, double y, double w, double h) {
  const auto png = encode_png(img);
  std::ostringstream s;
  s << "<image x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
    << "\" preserveAspectRatio=\"none\" href=\"data:image/png;base64," << base64_encode(png)
    << "\"/>\n";
  return s.str();
}

std::string polyline(const Trajectory& t, int size, const char* color, double width,
                     const char* dash = nullptr) {
  if (t.empty()) return {};
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"";
  if (dash != nullptr) s << " stroke-dasharray=\"" << dash << "\"";
  s << " points=\"";
  char buf[64];
  for (const auto& p : t) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", p.x * size, p.y * size);
    s << buf;
  }
  s << "\"/>\n";
  return s.str();
}

}  // namespace

std::string trajectory_svg(const RawImage* background, const std::vector<TrajectoryPlot>& plots,
                           int size_px) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px << "\" height=\""
    << size_px << "\" viewBox=\"0 0 " << size_px << " " << size_px << "\">\n";
  if (background != nullptr && !background->empty()) {
    s << image_element(*background, 0, 0, size_px, size_px);
  } else {
    s << "<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
  }
  for (const auto& p : plots) {
    for (const auto& pred : p.predictions) s << polyline(pred, size_px, "#33cc55", 1.5, "4 2");
    Trajectory truth = p.truth;
    if (!p.observed.empty() && !truth.empty()) truth.insert(truth.begin(), p.observed.back());
    s << polyline(truth, size_px, "#ffd21f", 2.0);
    s << polyline(p.observed, size_px, "#2a7fff", 2.5);
  }
  s << "<g font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<text x=\"8\" y=\"16\" fill=\"#2a7fff\">observed</text>\n"
    << "<text x=\"8\" y=\"30\" fill=\"#ffd21f\">ground truth</text>\n"
    << "<text x=\"8\" y=\"44\" fill=\"#33cc55\">predicted</text>\n</g>\n</svg>\n";
  return s.str();
}

std::string contact_sheet_svg(const GeneratedScene& scene, int max_frames) {
  const int total = static_cast<int>(scene.frames.size());
  const int shown = std::max(0, std::min(total, max_frames));
  const int cols = 4;
  const int rows = (shown + cols - 1) / cols;
  const int cell = 160;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell << "\" height=\""
    << std::max(1, rows) * cell << "\">\n";
  for (int i = 0; i < shown; ++i) {
    const int f = shown > 1 ? static_cast<int>(static_cast<long>(i) * (total - 1) / (shown - 1)) : 0;
    const double x = (i % cols) * cell + 4;
    const double y = (i / cols) * cell + 4;
    s << image_element(scene.frames[f], x, y, cell - 8, cell - 24);
    s << "<text x=\"" << x << "\" y=\"" << y + cell - 10
      << "\" font-family=\"sans-serif\" font-size=\"11\">frame "
      << scene.dataset.first_frame + f << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rdb
