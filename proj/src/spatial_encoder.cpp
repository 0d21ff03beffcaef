#include "rdb/spatial_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdb/error.hpp"
#include "rdb/random.hpp"

namespace rdb {

using nn::Matrix;
using nn::Vector;

void EncoderConfig::validate() const {
  require(!channels.empty() && channels.size() <= 5, ErrorCode::kConfig,
          "encoder needs 1..5 conv layers");
  for (int c : channels) require(c >= 1, ErrorCode::kConfig, "channel counts must be >= 1");
  require(latent_dim >= 1, ErrorCode::kConfig, "latent_dim must be >= 1");
}

void MmdConfig::validate() const {
  require(weight >= 0.0 && std::isfinite(weight), ErrorCode::kConfig,
          "mmd weight must be >= 0");
  require(bandwidth_mode != BandwidthMode::kFixed || bandwidth > 0.0,
          ErrorCode::kConfig, "fixed bandwidth must be > 0");
  require(prior_samples >= 0, ErrorCode::kConfig, "prior_samples must be >= 0");
}

// --- MMD -------------------------------------------------------------------

namespace {

double sq_dist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Bandwidth {
  double h = 1.0;
  // Pooled-sample index pairs whose distance defines h, with weights.
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> pairs;
};

Bandwidth choose_bandwidth(const std::vector<const Vector*>& pooled,
                           const MmdConfig& cfg) {
  Bandwidth bw;
  if (cfg.bandwidth_mode == BandwidthMode::kFixed) {
    bw.h = cfg.bandwidth;
    return bw;
  }
  struct PairDist {
    double d;
    std::size_t i, j;
  };
  std::vector<PairDist> dists;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = i + 1; j < pooled.size(); ++j) {
      dists.push_back({std::sqrt(sq_dist(*pooled[i], *pooled[j])), i, j});
    }
  }
  if (dists.empty()) return bw;
  auto less = [](const PairDist& a, const PairDist& b) {
    return a.d != b.d ? a.d < b.d : (a.i != b.i ? a.i < b.i : a.j < b.j);
  };
  std::sort(dists.begin(), dists.end(), less);
  const std::size_t n = dists.size();
  double h = 0.0;
  if (n % 2 == 1) {
    h = dists[n / 2].d;
    bw.pairs.push_back({{dists[n / 2].i, dists[n / 2].j}, 1.0});
  } else {
    h = 0.5 * (dists[n / 2 - 1].d + dists[n / 2].d);
    bw.pairs.push_back({{dists[n / 2 - 1].i, dists[n / 2 - 1].j}, 0.5});
    bw.pairs.push_back({{dists[n / 2].i, dists[n / 2].j}, 0.5});
  }
  if (h < 1e-12) {
    bw.pairs.clear();
    return bw;  // degenerate sample: unit bandwidth, no bandwidth gradient
  }
  bw.h = h;
  return bw;
}

}  // namespace

double mmd_squared(std::span<const Vector> a, std::span<const Vector> b,
                   const MmdConfig& cfg, std::vector<Vector>* grad_a) {
  require(!a.empty() && !b.empty(), ErrorCode::kInvalidArgument,
          "mmd needs two nonempty samples");
  const Eigen::Index dim = a.front().size();
  for (const auto& v : a) require(v.size() == dim, ErrorCode::kDimension, "mmd dimension mismatch");
  for (const auto& v : b) require(v.size() == dim, ErrorCode::kDimension, "mmd dimension mismatch");

  std::vector<const Vector*> pooled;
  for (const auto& v : a) pooled.push_back(&v);
  for (const auto& v : b) pooled.push_back(&v);
  const Bandwidth bw = choose_bandwidth(pooled, cfg);
  const double h2 = bw.h * bw.h;

  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  auto kernel = [&](const Vector& x, const Vector& y, double* d2) {
    *d2 = sq_dist(x, y);
    return std::exp(-*d2 / (2.0 * h2));
  };

  double saa = 0.0, sbb = 0.0, sab = 0.0;
  double dh = 0.0;  // d(mmd)/dh
  if (grad_a != nullptr) grad_a->assign(a.size(), Vector::Zero(dim));
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double k = kernel(a[i], a[j], &d2);
      saa += k;
      if (grad_a != nullptr) {
        // Term (i, j) and (j, i) both depend on a_i: factor 2 over the full sum.
        (*grad_a)[i] += (-2.0 / (n * n)) * k / h2 * (a[i] - a[j]);
        dh += k * d2 / (h2 * bw.h) / (n * n);
      }
    }
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double k = kernel(b[i], b[j], &d2);
      sbb += k;
      if (grad_a != nullptr) dh += k * d2 / (h2 * bw.h) / (m * m);
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double k = kernel(a[i], b[j], &d2);
      sab += k;
      if (grad_a != nullptr) {
        (*grad_a)[i] += (2.0 / (n * m)) * k / h2 * (a[i] - b[j]);
        dh -= 2.0 * k * d2 / (h2 * bw.h) / (n * m);
      }
    }
  }
  const double value = saa / (n * n) + sbb / (m * m) - 2.0 * sab / (n * m);

  if (grad_a != nullptr) {
    for (const auto& [pair, weight] : bw.pairs) {
      const auto [i, j] = pair;
      const Vector diff = *pooled[i] - *pooled[j];
      const double dist = diff.norm();
      if (dist <= 0.0) continue;
      const Vector dd = weight * dh / dist * diff;  // d(h)/d(pooled[i]) * dh
      if (i < a.size()) (*grad_a)[i] += dd;
      if (j < a.size()) (*grad_a)[j] -= dd;
    }
  }
  return value;
}

double mmd_squared(std::span<const Vector> a, std::span<const Vector> b,
                   const MmdConfig& cfg) {
  return mmd_squared(a, b, cfg, nullptr);
}

// --- Image conversion ------------------------------------------------------

Matrix to_matrix(const ImageFrame& image) {
  constexpr int n = ImageFrame::kSize * ImageFrame::kSize;
  Matrix m(ImageFrame::kChannels, n);
  for (int c = 0; c < ImageFrame::kChannels; ++c) {
    for (int p = 0; p < n; ++p) m(c, p) = image.pixels[static_cast<std::size_t>(c) * n + p];
  }
  return m;
}

ImageFrame to_frame(const Matrix& m, int frame) {
  constexpr int n = ImageFrame::kSize * ImageFrame::kSize;
  ImageFrame out;
  out.frame = frame;
  for (int c = 0; c < ImageFrame::kChannels; ++c) {
    for (int p = 0; p < n; ++p) {
      out.pixels[static_cast<std::size_t>(c) * n + p] = static_cast<float>(m(c, p));
    }
  }
  return out;
}

// --- Autoencoder -----------------------------------------------------------

struct SpatialEncoder::EncoderTrace {
  std::vector<Matrix> cols;         // im2col per conv
  std::vector<Matrix> activations;  // post-ReLU per conv
  Vector flat;
};

struct SpatialEncoder::DecoderTrace {
  Vector z;
  Vector dense_out;                 // post-ReLU
  std::vector<Matrix> inputs;       // input of each deconv
  Matrix output;                    // post-sigmoid
};

void SpatialEncoder::build_layout() {
  cfg_.validate();
  int size = ImageFrame::kSize;
  int in_c = ImageFrame::kChannels;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    nn::ConvGeometry g{in_c, size, size, 4, 2, 1};
    convs_.push_back(nn::Conv2d::make(layout_, "enc.conv" + std::to_string(i), g,
                                      cfg_.channels[i]));
    in_c = cfg_.channels[i];
    size /= 2;
  }
  const Eigen::Index flat = static_cast<Eigen::Index>(in_c) * size * size;
  enc_dense_ = nn::Dense::make(layout_, "enc.dense", flat, cfg_.latent_dim);
  dec_dense_ = nn::Dense::make(layout_, "dec.dense", cfg_.latent_dim, flat);
  for (std::size_t i = cfg_.channels.size(); i-- > 0;) {
    const int out_c = i == 0 ? ImageFrame::kChannels : cfg_.channels[i - 1];
    nn::ConvGeometry g{out_c, size * 2, size * 2, 4, 2, 1};
    deconvs_.push_back(nn::ConvTranspose2d::make(
        layout_, "dec.deconv" + std::to_string(cfg_.channels.size() - 1 - i),
        cfg_.channels[i], g));
    size *= 2;
  }
}

SpatialEncoder::SpatialEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  build_layout();
  params_.assign(layout_.size(), 0.0);
  Rng rng(derive_seed(seed, {0x52}));
  const double relu_gain = std::sqrt(2.0);
  for (const auto& c : convs_) c.init(params_, rng, relu_gain);
  enc_dense_.init(params_, rng, 1.0);
  dec_dense_.init(params_, rng, relu_gain);
  for (std::size_t i = 0; i < deconvs_.size(); ++i) {
    deconvs_[i].init(params_, rng, i + 1 == deconvs_.size() ? 1.0 : relu_gain);
  }
}

SpatialEncoder::SpatialEncoder(const EncoderConfig& cfg, std::vector<double> params)
    : cfg_(cfg) {
  build_layout();
  require(params.size() == layout_.size(), ErrorCode::kDimension,
          "encoder parameter count " + std::to_string(params.size()) +
              " does not match architecture (" + std::to_string(layout_.size()) + ")");
  require(nn::all_finite(params), ErrorCode::kNumeric, "encoder parameters not finite");
  params_ = std::move(params);
}

namespace {

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

void check_finite(const Matrix& m, const char* where, std::size_t layer) {
  if (!m.allFinite()) {
    fail(ErrorCode::kNumeric, std::string("non-finite activation in ") + where +
                                  " layer " + std::to_string(layer));
  }
}

}  // namespace

Vector SpatialEncoder::encode_traced(const Matrix& x, EncoderTrace* trace) const {
  const double* p = params_.data();
  Matrix a = x;
  Matrix cols;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    a = convs_[i].forward(p, a, &cols);
    relu_inplace(a);
    check_finite(a, "encoder", i);
    if (trace != nullptr) {
      trace->cols.push_back(std::move(cols));
      trace->activations.push_back(a);
    }
  }
  Vector flat = Eigen::Map<const Vector>(a.data(), a.size());
  Vector z = enc_dense_.forward(p, flat).col(0);
  check_finite(z, "encoder", convs_.size());
  if (trace != nullptr) trace->flat = std::move(flat);
  return z;
}

Matrix SpatialEncoder::decode_traced(const Vector& z, DecoderTrace* trace) const {
  const double* p = params_.data();
  Matrix d = dec_dense_.forward(p, z);
  relu_inplace(d);
  check_finite(d, "decoder", 0);
  const int size = cfg_.bottleneck_size();
  Matrix a = Eigen::Map<const Matrix>(d.data(), cfg_.channels.back(),
                                      static_cast<Eigen::Index>(size) * size);
  if (trace != nullptr) {
    trace->z = z;
    trace->dense_out = d.col(0);
  }
  for (std::size_t i = 0; i < deconvs_.size(); ++i) {
    if (trace != nullptr) trace->inputs.push_back(a);
    a = deconvs_[i].forward(p, a);
    if (i + 1 < deconvs_.size()) {
      relu_inplace(a);
    } else {
      a = nn::sigmoid(a);
    }
    check_finite(a, "decoder", i + 1);
  }
  if (trace != nullptr) trace->output = a;
  return a;
}

void SpatialEncoder::encode_backward(const EncoderTrace& trace, const Vector& dz,
                                     double* g) const {
  const double* p = params_.data();
  Matrix dflat = enc_dense_.backward(p, trace.flat, dz, g);
  const Matrix& last = trace.activations.back();
  Matrix da = Eigen::Map<const Matrix>(dflat.data(), last.rows(), last.cols());
  for (std::size_t i = convs_.size(); i-- > 0;) {
    da = da.cwiseProduct((trace.activations[i].array() > 0.0).cast<double>().matrix());
    if (i == 0) {
      // Input gradient not needed.
      const Eigen::Index k = convs_[0].geometry.patch_size();
      nn::view(g, convs_[0].weight, convs_[0].out_channels, k).noalias() +=
          da * trace.cols[0].transpose();
      nn::view(g, convs_[0].bias, convs_[0].out_channels, 1).col(0) += da.rowwise().sum();
    } else {
      da = convs_[i].backward(p, trace.cols[i], da, g);
    }
  }
}

Vector SpatialEncoder::decode_backward(const DecoderTrace& trace, const Matrix& dy,
                                       double* g) const {
  const double* p = params_.data();
  Matrix da = dy.cwiseProduct(trace.output.cwiseProduct(
      (Matrix::Ones(trace.output.rows(), trace.output.cols()) - trace.output)));
  for (std::size_t i = deconvs_.size(); i-- > 0;) {
    da = deconvs_[i].backward(p, trace.inputs[i], da, g);
    if (i > 0) {
      da = da.cwiseProduct((trace.inputs[i].array() > 0.0).cast<double>().matrix());
    }
  }
  Vector dd = Eigen::Map<const Vector>(da.data(), da.size());
  dd = dd.cwiseProduct((trace.dense_out.array() > 0.0).cast<double>().matrix());
  return dec_dense_.backward(p, trace.z, dd, g).col(0);
}

LatentVector SpatialEncoder::encode(const ImageFrame& image) const {
  validate_frame(image);
  return LatentVector(encode_traced(to_matrix(image), nullptr));
}

ImageFrame SpatialEncoder::decode(const LatentVector& latent) const {
  require(latent.size() == cfg_.latent_dim, ErrorCode::kDimension,
          "latent dimension " + std::to_string(latent.size()) + " != " +
              std::to_string(cfg_.latent_dim));
  require(latent.values.allFinite(), ErrorCode::kNumeric, "latent holds non-finite values");
  return to_frame(decode_traced(latent.values, nullptr));
}

double SpatialEncoder::reconstruction_error(const ImageFrame& image) const {
  const Matrix x = to_matrix(image);
  const Matrix y = decode_traced(encode_traced(x, nullptr), nullptr);
  return (y - x).squaredNorm() / static_cast<double>(x.size());
}

double SpatialEncoder::r_loss(std::span<const ImageFrame* const> batch,
                              const MmdConfig& cfg, std::uint64_t seed,
                              std::vector<double>* grad) const {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "r_loss needs a nonempty batch");
  cfg.validate();
  const std::size_t n = batch.size();
  std::vector<Matrix> inputs(n);
  std::vector<EncoderTrace> enc(n);
  std::vector<Vector> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    validate_frame(*batch[i]);
    inputs[i] = to_matrix(*batch[i]);
    z[i] = encode_traced(inputs[i], grad != nullptr ? &enc[i] : nullptr);
  }

  const std::size_t prior_n = cfg.prior_samples > 0 ? cfg.prior_samples : n;
  Rng rng(seed);
  std::vector<Vector> prior(prior_n, Vector(cfg_.latent_dim));
  for (auto& v : prior) {
    for (Eigen::Index d = 0; d < v.size(); ++d) v[d] = standard_normal(rng);
  }

  std::vector<Vector> dmmd;
  const double mmd = cfg.weight > 0.0
                         ? mmd_squared(z, prior, cfg, grad != nullptr ? &dmmd : nullptr)
                         : 0.0;

  if (grad != nullptr) grad->assign(params_.size(), 0.0);
  double recon = 0.0;
  const double pixels = static_cast<double>(ImageFrame::kValues);
  for (std::size_t i = 0; i < n; ++i) {
    DecoderTrace dec;
    const Matrix y = decode_traced(z[i], grad != nullptr ? &dec : nullptr);
    const Matrix diff = y - inputs[i];
    recon += diff.squaredNorm() / pixels;
    if (grad != nullptr) {
      const Matrix dy = (2.0 / (pixels * static_cast<double>(n))) * diff;
      Vector dz = decode_backward(dec, dy, grad->data());
      if (cfg.weight > 0.0) dz += cfg.weight * dmmd[i];
      encode_backward(enc[i], dz, grad->data());
    }
  }
  const double loss = recon / static_cast<double>(n) + cfg.weight * mmd;
  require(std::isfinite(loss), ErrorCode::kNumeric, "r_loss is not finite");
  return loss;
}

}  // namespace rdb
