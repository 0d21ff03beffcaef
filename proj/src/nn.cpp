#include "rdb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdb/error.hpp"

namespace rdb::nn {

std::size_t ParamLayout::add(const std::string& name, Eigen::Index rows,
                             Eigen::Index cols) {
  ParamBlock block{name, size_, rows, cols};
  size_ += block.size();
  blocks_.push_back(block);
  return block.offset;
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

namespace {

void fill_normal(double* p, std::size_t n, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < n; ++i) p[i] = dist(rng);
}

}  // namespace

// --- Dense -----------------------------------------------------------------

Dense Dense::make(ParamLayout& layout, const std::string& name, Eigen::Index in,
                  Eigen::Index out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = layout.add(name + ".weight", out, in);
  d.bias = layout.add(name + ".bias", out, 1);
  return d;
}

void Dense::init(std::span<double> params, Rng& rng, double gain) const {
  fill_normal(params.data() + weight, static_cast<std::size_t>(out * in), rng,
              gain / std::sqrt(static_cast<double>(in)));
  std::fill_n(params.data() + bias, out, 0.0);
}

Matrix Dense::forward(const double* p, const Matrix& x) const {
  Matrix y = view(p, weight, out, in) * x;
  y.colwise() += view(p, bias, out, 1).col(0);
  return y;
}

Matrix Dense::backward(const double* p, const Matrix& x, const Matrix& dy,
                       double* g) const {
  view(g, weight, out, in).noalias() += dy * x.transpose();
  view(g, bias, out, 1).col(0) += dy.rowwise().sum();
  return view(p, weight, out, in).transpose() * dy;
}

// --- Convolutions ----------------------------------------------------------

Matrix im2col(const Matrix& image, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const Eigen::Index c = g.channels;
  Matrix cols = Matrix::Zero(g.patch_size(), static_cast<Eigen::Index>(oh) * ow);
  const double* src = image.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* dst = cols.data() + (static_cast<Eigen::Index>(oy) * ow + ox) * cols.rows();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.width) continue;
          const double* px = src + (static_cast<Eigen::Index>(iy) * g.width + ix) * c;
          double* out = dst + (ky * g.kernel + kx) * c;
          for (Eigen::Index ch = 0; ch < c; ++ch) out[ch] = px[ch];
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, const ConvGeometry& g) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const Eigen::Index c = g.channels;
  Matrix image = Matrix::Zero(c, static_cast<Eigen::Index>(g.height) * g.width);
  double* dst = image.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* src =
          cols.data() + (static_cast<Eigen::Index>(oy) * ow + ox) * cols.rows();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.width) continue;
          double* px = dst + (static_cast<Eigen::Index>(iy) * g.width + ix) * c;
          const double* in = src + (ky * g.kernel + kx) * c;
          for (Eigen::Index ch = 0; ch < c; ++ch) px[ch] += in[ch];
        }
      }
    }
  }
  return image;
}

Conv2d Conv2d::make(ParamLayout& layout, const std::string& name,
                    const ConvGeometry& geometry, int out_channels) {
  Conv2d conv;
  conv.geometry = geometry;
  conv.out_channels = out_channels;
  conv.weight = layout.add(name + ".weight", out_channels, geometry.patch_size());
  conv.bias = layout.add(name + ".bias", out_channels, 1);
  return conv;
}

void Conv2d::init(std::span<double> params, Rng& rng, double gain) const {
  const Eigen::Index k = geometry.patch_size();
  fill_normal(params.data() + weight, static_cast<std::size_t>(out_channels * k), rng,
              gain / std::sqrt(static_cast<double>(k)));
  std::fill_n(params.data() + bias, out_channels, 0.0);
}

Matrix Conv2d::forward(const double* p, const Matrix& x, Matrix* cols) const {
  *cols = im2col(x, geometry);
  Matrix y = view(p, weight, out_channels, geometry.patch_size()) * (*cols);
  y.colwise() += view(p, bias, out_channels, 1).col(0);
  return y;
}

Matrix Conv2d::backward(const double* p, const Matrix& cols, const Matrix& dy,
                        double* g) const {
  const Eigen::Index k = geometry.patch_size();
  view(g, weight, out_channels, k).noalias() += dy * cols.transpose();
  view(g, bias, out_channels, 1).col(0) += dy.rowwise().sum();
  Matrix dcols = view(p, weight, out_channels, k).transpose() * dy;
  return col2im(dcols, geometry);
}

ConvTranspose2d ConvTranspose2d::make(ParamLayout& layout, const std::string& name,
                                      int in_channels, const ConvGeometry& geometry) {
  ConvTranspose2d conv;
  conv.geometry = geometry;
  conv.in_channels = in_channels;
  conv.weight = layout.add(name + ".weight", in_channels, geometry.patch_size());
  conv.bias = layout.add(name + ".bias", geometry.channels, 1);
  return conv;
}

void ConvTranspose2d::init(std::span<double> params, Rng& rng, double gain) const {
  // Each output pixel receives (k/stride)^2 * in_channels contributions.
  const double fan_in = static_cast<double>(in_channels) * geometry.kernel *
                        geometry.kernel / (geometry.stride * geometry.stride);
  fill_normal(params.data() + weight,
              static_cast<std::size_t>(in_channels * geometry.patch_size()), rng,
              gain / std::sqrt(fan_in));
  std::fill_n(params.data() + bias, geometry.channels, 0.0);
}

Matrix ConvTranspose2d::forward(const double* p, const Matrix& x) const {
  Matrix cols = view(p, weight, in_channels, geometry.patch_size()).transpose() * x;
  Matrix y = col2im(cols, geometry);
  y.colwise() += view(p, bias, geometry.channels, 1).col(0);
  return y;
}

Matrix ConvTranspose2d::backward(const double* p, const Matrix& x, const Matrix& dy,
                                 double* g) const {
  const Eigen::Index k = geometry.patch_size();
  Matrix dcols = im2col(dy, geometry);
  view(g, weight, in_channels, k).noalias() += x * dcols.transpose();
  view(g, bias, geometry.channels, 1).col(0) += dy.rowwise().sum();
  return view(p, weight, in_channels, k) * dcols;
}

// --- LSTM ------------------------------------------------------------------

LstmCell LstmCell::make(ParamLayout& layout, const std::string& name, Eigen::Index in,
                        Eigen::Index hidden) {
  LstmCell cell;
  cell.in = in;
  cell.hidden = hidden;
  cell.weight = layout.add(name + ".weight", 4 * hidden, in + hidden);
  cell.bias = layout.add(name + ".bias", 4 * hidden, 1);
  return cell;
}

void LstmCell::init(std::span<double> params, Rng& rng) const {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  double* w = params.data() + weight;
  for (Eigen::Index i = 0; i < 4 * hidden * (in + hidden); ++i) w[i] = dist(rng);
  double* b = params.data() + bias;
  for (Eigen::Index i = 0; i < 4 * hidden; ++i) {
    b[i] = (i >= hidden && i < 2 * hidden) ? 1.0 : 0.0;
  }
}

void LstmCell::forward(const double* p, const Matrix& x, const Matrix& h_prev,
                       const Matrix& c_prev, Matrix& h, Matrix& c,
                       Cache* cache) const {
  const Eigen::Index batch = x.cols();
  Matrix xh(in + hidden, batch);
  xh.topRows(in) = x;
  xh.bottomRows(hidden) = h_prev;
  Matrix pre = view(p, weight, 4 * hidden, in + hidden) * xh;
  pre.colwise() += view(p, bias, 4 * hidden, 1).col(0);
  Matrix i = sigmoid(pre.middleRows(0, hidden));
  Matrix f = sigmoid(pre.middleRows(hidden, hidden));
  Matrix gg = pre.middleRows(2 * hidden, hidden).array().tanh().matrix();
  Matrix o = sigmoid(pre.middleRows(3 * hidden, hidden));
  c = f.cwiseProduct(c_prev) + i.cwiseProduct(gg);
  Matrix tanh_c = c.array().tanh().matrix();
  h = o.cwiseProduct(tanh_c);
  if (cache != nullptr) {
    cache->xh = std::move(xh);
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(gg);
    cache->o = std::move(o);
    cache->c_prev = c_prev;
    cache->tanh_c = std::move(tanh_c);
  }
}

void LstmCell::backward(const double* p, const Cache& k, const Matrix& dh,
                        const Matrix& dc_next, double* g, Matrix* dx,
                        Matrix& dh_prev, Matrix& dc_prev) const {
  const Eigen::Index batch = dh.cols();
  const auto one = [](const Matrix& m) { return Matrix::Ones(m.rows(), m.cols()); };
  Matrix d_o = dh.cwiseProduct(k.tanh_c);
  Matrix dc = dc_next + dh.cwiseProduct(k.o).cwiseProduct(
                            one(k.tanh_c) - k.tanh_c.cwiseProduct(k.tanh_c));
  Matrix dpre(4 * hidden, batch);
  dpre.middleRows(0, hidden) =
      dc.cwiseProduct(k.g).cwiseProduct(k.i).cwiseProduct(one(k.i) - k.i);
  dpre.middleRows(hidden, hidden) =
      dc.cwiseProduct(k.c_prev).cwiseProduct(k.f).cwiseProduct(one(k.f) - k.f);
  dpre.middleRows(2 * hidden, hidden) =
      dc.cwiseProduct(k.i).cwiseProduct(one(k.g) - k.g.cwiseProduct(k.g));
  dpre.middleRows(3 * hidden, hidden) =
      d_o.cwiseProduct(k.o).cwiseProduct(one(k.o) - k.o);
  dc_prev = dc.cwiseProduct(k.f);
  view(g, weight, 4 * hidden, in + hidden).noalias() += dpre * k.xh.transpose();
  view(g, bias, 4 * hidden, 1).col(0) += dpre.rowwise().sum();
  Matrix dxh = view(p, weight, 4 * hidden, in + hidden).transpose() * dpre;
  if (dx != nullptr) *dx = dxh.topRows(in);
  dh_prev = dxh.bottomRows(hidden);
}

// --- Adam ------------------------------------------------------------------

Adam::Adam(std::size_t size, const AdamConfig& cfg)
    : cfg_(cfg), lr_(cfg.learning_rate), m_(size, 0.0), v_(size, 0.0) {
  require(cfg.learning_rate > 0.0, ErrorCode::kConfig, "learning rate must be > 0");
  require(cfg.final_lr_fraction > 0.0 && cfg.final_lr_fraction <= 1.0, ErrorCode::kConfig,
          "final_lr_fraction must lie in (0, 1]");
}

void Adam::anneal(double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  const double f = cfg_.final_lr_fraction;
  lr_ = cfg_.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * p)));
}

double Adam::step(std::span<double> params, std::span<double> grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(),
          ErrorCode::kDimension, "optimizer size mismatch");
  double sq = 0.0;
  for (double gv : grad) sq += gv * gv;
  const double norm = std::sqrt(sq);
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    const double scale = cfg_.clip_norm / norm;
    for (double& gv : grad) gv *= scale;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
  }
  return norm;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace rdb::nn
