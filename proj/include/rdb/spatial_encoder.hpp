#ifndef RDB_SPATIAL_ENCODER_HPP_
#define RDB_SPATIAL_ENCODER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "rdb/image.hpp"
#include "rdb/nn.hpp"

namespace rdb {

// Latent code of one scene image.
struct LatentVector {
  nn::Vector values;

  LatentVector() = default;
  explicit LatentVector(nn::Vector v) : values(std::move(v)) {}
  Eigen::Index size() const { return values.size(); }
};

// Convolutional autoencoder topology. Each entry of `channels` is a stride-2
// 4x4 conv (ReLU) halving the 64x64 input; the decoder mirrors it with
// transposed convs and ends in a sigmoid.
struct EncoderConfig {
  std::vector<int> channels{32, 64, 128, 256};
  int latent_dim = 64;

  void validate() const;
  int bottleneck_size() const { return ImageFrame::kSize >> channels.size(); }
};

enum class BandwidthMode { kMedianHeuristic, kFixed };

struct MmdConfig {
  BandwidthMode bandwidth_mode = BandwidthMode::kMedianHeuristic;
  double bandwidth = 1.0;  // used when bandwidth_mode == kFixed
  double weight = 10.0;    // lambda
  int prior_samples = 0;   // 0: same as the batch size

  void validate() const;
};

// Biased (V-statistic) squared MMD with a Gaussian RBF kernel
// k(a, b) = exp(-|a - b|^2 / (2 h^2)). Under the median heuristic h is the
// median distance over all distinct pairs of the pooled sample.
double mmd_squared(std::span<const nn::Vector> a, std::span<const nn::Vector> b,
                   const MmdConfig& cfg);

// Same value plus d(mmd)/d(a_i), including the dependence of the median
// bandwidth on the a-sample.
double mmd_squared(std::span<const nn::Vector> a, std::span<const nn::Vector> b,
                   const MmdConfig& cfg, std::vector<nn::Vector>* grad_a);

class SpatialEncoder {
 public:
  SpatialEncoder(const EncoderConfig& cfg, std::uint64_t seed);
  SpatialEncoder(const EncoderConfig& cfg, std::vector<double> params);

  const EncoderConfig& config() const { return cfg_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  LatentVector encode(const ImageFrame& image) const;
  ImageFrame decode(const LatentVector& latent) const;

  // Mean per-pixel squared reconstruction error over the batch plus
  // weight * mmd_squared(encoded batch, standard-normal prior sample drawn
  // from seed). When grad is non-null it is resized and filled with the
  // gradient w.r.t. parameters().
  double r_loss(std::span<const ImageFrame* const> batch, const MmdConfig& cfg,
                std::uint64_t seed, std::vector<double>* grad = nullptr) const;

  // Per-pixel MSE of decode(encode(image)).
  double reconstruction_error(const ImageFrame& image) const;

 private:
  struct EncoderTrace;
  struct DecoderTrace;

  void build_layout();
  nn::Vector encode_traced(const nn::Matrix& x, EncoderTrace* trace) const;
  nn::Matrix decode_traced(const nn::Vector& z, DecoderTrace* trace) const;
  void encode_backward(const EncoderTrace& trace, const nn::Vector& dz, double* g) const;
  nn::Vector decode_backward(const DecoderTrace& trace, const nn::Matrix& dy,
                             double* g) const;

  EncoderConfig cfg_;
  nn::ParamLayout layout_;
  std::vector<nn::Conv2d> convs_;
  nn::Dense enc_dense_;
  nn::Dense dec_dense_;
  std::vector<nn::ConvTranspose2d> deconvs_;
  std::vector<double> params_;
};

nn::Matrix to_matrix(const ImageFrame& image);
ImageFrame to_frame(const nn::Matrix& m, int frame = 0);

}  // namespace rdb

#endif  // RDB_SPATIAL_ENCODER_HPP_
