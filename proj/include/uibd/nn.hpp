#ifndef UIBD_NN_HPP_
#define UIBD_NN_HPP_

#include <string>
#include <vector>

#include "uibd/rng.hpp"
#include "uibd/tensor.hpp"

namespace uibd {

enum class LayerKind {
  kDense,
  kConv2d,
  kTConv2d,
  kRelu,
  kLeakyRelu,
  kTanh,
  kGroupNorm,
  kResidual,
  kMaxPool,
  kTimeEmbed,
};

// One layer of a sequential chain. Residual blocks nest a sub-chain that
// must preserve the input shape.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;  // conv / tconv / maxpool
  int in_units = 0, out_units = 0;                             // dense
  double slope = 0.01;                                         // leaky relu
  int groups = 1;                                              // groupnorm
  int emb_dim = 0;                                             // time embedding
  std::vector<LayerSpec> body;                                 // residual

  static LayerSpec dense(int in_units, int out_units);
  static LayerSpec conv2d(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0);
  static LayerSpec tconv2d(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0);
  static LayerSpec relu();
  static LayerSpec leaky_relu(double slope = 0.01);
  static LayerSpec tanh_act();
  static LayerSpec group_norm(int groups);
  static LayerSpec residual(std::vector<LayerSpec> body);
  static LayerSpec max_pool(int kernel, int stride);
  // Sinusoidal features of the time index drive a learned per-channel
  // modulation y_c = x_c * (1 + scale_c) + shift_c (zero-initialized, so an
  // untrained layer is the identity).
  static LayerSpec time_embed(int emb_dim);
};

// Ordered, named parameter tensors. Also used as the gradient accumulator
// (same names, same shapes).
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  size_t count() const { return tensors.size(); }
  void zero();
  ModelParams like_zeros() const;
  const Tensor& find(const std::string& name) const;
};

// Activation record from one forward pass, sufficient for an exact
// reverse-mode sweep. kink_margin tracks the distance of relu inputs /
// maxpool runner-up gaps from their nondifferentiable points, so gradient
// checks can skip coordinates sitting on a kink.
struct Tape {
  struct LayerRec {
    Tensor input;
    Tensor extra;   // pre-activations, saved output, argmax, group stats...
    Tensor extra2;
    std::vector<LayerRec> body;
  };
  std::vector<LayerRec> recs;
  Tensor output;
  int time_index = -1;
  double kink_margin = 0.0;
  bool valid = false;
};

// A sequential network: spec chain + parameters. Shapes are validated at
// construction; forward rejects inputs that do not match.
class Model {
 public:
  Model(std::vector<LayerSpec> spec, std::vector<int> input_shape);

  const std::vector<LayerSpec>& spec() const { return spec_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }
  bool needs_time() const { return needs_time_; }

  void init_params(Rng& rng);

  ModelParams params;

 private:
  std::vector<LayerSpec> spec_;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  bool needs_time_ = false;
};

std::vector<int> layer_output_shape(const LayerSpec& layer, const std::vector<int>& in_shape);

// Runs the chain. time_index must be >= 1 iff the chain contains a time
// embedding; pass -1 otherwise. Fills `tape` for model_backward.
Tensor model_forward(const Model& m, const Tensor& input, int time_index, Tape& tape);

// Convenience overload when no backward pass is needed.
Tensor model_forward(const Model& m, const Tensor& input, int time_index = -1);

// Exact reverse-mode sweep. Accumulates parameter gradients into
// `param_grads` (caller zeroes) and writes the input gradient.
void model_backward(const Model& m, const Tape& tape, const Tensor& upstream,
                    ModelParams& param_grads, Tensor& input_grad);

// Forward through the first `n_layers` layers only (feature extraction).
Tensor model_forward_prefix(const Model& m, const Tensor& input, int n_layers);

// The time index to pass for this model: t for time-conditioned chains, -1
// otherwise (losses and samplers work with both).
inline int time_arg(const Model& m, int t) { return m.needs_time() ? t : -1; }

}  // namespace uibd

#endif  // UIBD_NN_HPP_
