#ifndef RDB_NN_HPP_
#define RDB_NN_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdb/random.hpp"

// Minimal layer kit with hand-written backward passes. Every layer reads its
// weights from a flat parameter buffer at fixed offsets; gradients accumulate
// into a buffer of the same layout. Activations are column-batched:
// features x batch, or channels x pixels for images.
namespace rdb::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

class ParamLayout {
 public:
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  std::size_t size() const { return size_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t size_ = 0;
};

inline ConstMap view(const double* p, std::size_t offset, Eigen::Index rows,
                     Eigen::Index cols) {
  return ConstMap(p + offset, rows, cols);
}
inline MutMap view(double* p, std::size_t offset, Eigen::Index rows,
                   Eigen::Index cols) {
  return MutMap(p + offset, rows, cols);
}

Matrix sigmoid(const Matrix& x);

struct Dense {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  std::size_t weight = 0;  // out x in
  std::size_t bias = 0;    // out

  static Dense make(ParamLayout& layout, const std::string& name, Eigen::Index in,
                    Eigen::Index out);
  std::size_t param_count() const { return static_cast<std::size_t>(out * (in + 1)); }
  // Weights ~ N(0, gain^2 / in), bias zero.
  void init(std::span<double> params, Rng& rng, double gain) const;
  Matrix forward(const double* p, const Matrix& x) const;
  // Accumulates parameter gradients into g and returns d(loss)/dx.
  Matrix backward(const double* p, const Matrix& x, const Matrix& dy, double* g) const;
};

// Geometry of a strided 2-D convolution from a (channels, height, width)
// image to a (out_height, out_width) grid of k x k patches.
struct ConvGeometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 4;
  int stride = 2;
  int pad = 1;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  Eigen::Index patch_size() const {
    return static_cast<Eigen::Index>(channels) * kernel * kernel;
  }
};

// Patch matrix (patch_size x out_pixels); patch row ((ky*k + kx)*C + c).
Matrix im2col(const Matrix& image, const ConvGeometry& g);
// Adjoint of im2col: scatters patch columns back onto a C x (H*W) image.
Matrix col2im(const Matrix& cols, const ConvGeometry& g);

struct Conv2d {
  ConvGeometry geometry;
  int out_channels = 0;
  std::size_t weight = 0;  // out_channels x patch_size
  std::size_t bias = 0;

  static Conv2d make(ParamLayout& layout, const std::string& name,
                     const ConvGeometry& geometry, int out_channels);
  void init(std::span<double> params, Rng& rng, double gain) const;
  // x: channels x (height*width). Stores the patch matrix in *cols.
  Matrix forward(const double* p, const Matrix& x, Matrix* cols) const;
  Matrix backward(const double* p, const Matrix& cols, const Matrix& dy,
                  double* g) const;
};

// Transposed convolution; `geometry` describes the (large) output side, so a
// Conv2d with the same geometry maps the output back to the input grid.
struct ConvTranspose2d {
  ConvGeometry geometry;  // channels = out channels
  int in_channels = 0;
  std::size_t weight = 0;  // in_channels x patch_size
  std::size_t bias = 0;

  static ConvTranspose2d make(ParamLayout& layout, const std::string& name,
                              int in_channels, const ConvGeometry& geometry);
  void init(std::span<double> params, Rng& rng, double gain) const;
  // x: in_channels x (out_height()*out_width()) of the geometry.
  Matrix forward(const double* p, const Matrix& x) const;
  Matrix backward(const double* p, const Matrix& x, const Matrix& dy,
                  double* g) const;
};

// Single-layer LSTM cell, gate order (input, forget, cell, output).
struct LstmCell {
  Eigen::Index in = 0;
  Eigen::Index hidden = 0;
  std::size_t weight = 0;  // 4H x (in + H)
  std::size_t bias = 0;    // 4H

  struct Cache {
    Matrix xh;
    Matrix i, f, g, o;
    Matrix c_prev;
    Matrix tanh_c;
  };

  static LstmCell make(ParamLayout& layout, const std::string& name, Eigen::Index in,
                       Eigen::Index hidden);
  std::size_t param_count() const {
    return static_cast<std::size_t>(4 * hidden * (in + hidden + 1));
  }
  // Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
  void init(std::span<double> params, Rng& rng) const;
  void forward(const double* p, const Matrix& x, const Matrix& h_prev,
               const Matrix& c_prev, Matrix& h, Matrix& c, Cache* cache) const;
  // dh: gradient w.r.t. h_t, dc: gradient flowing into c_t from step t+1.
  void backward(const double* p, const Cache& cache, const Matrix& dh,
                const Matrix& dc, double* g, Matrix* dx, Matrix& dh_prev,
                Matrix& dc_prev) const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double final_lr_fraction = 1.0;  // cosine decay target; 1 keeps the rate constant
};

class Adam {
 public:
  Adam(std::size_t size, const AdamConfig& cfg);
  // Clips grad to the configured global norm, then updates params.
  // Returns the pre-clip gradient norm.
  double step(std::span<double> params, std::span<double> grad);
  // Sets the rate for training progress in [0, 1] along the cosine schedule.
  void anneal(double progress);
  double learning_rate() const { return lr_; }

 private:
  AdamConfig cfg_;
  double lr_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

bool all_finite(std::span<const double> values);

}  // namespace rdb::nn

#endif  // RDB_NN_HPP_
