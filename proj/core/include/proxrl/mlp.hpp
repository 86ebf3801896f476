#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace proxrl {

enum class Activation { Tanh, Relu };

/// Fully connected network with a linear output layer. Parameters are plain
/// values; the canonical flat ordering is W0 (row-major), b0, W1, b1, ...
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // out x in per layer
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::Tanh;
  std::vector<Eigen::VectorXd> spectral_u;  // power-iteration state per layer

  int n_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  Eigen::Index param_count() const;
  std::vector<int> layer_dims() const;
  void validate() const;
};

/// Uniform fan-in initialization (U[-1/sqrt(fan_in), 1/sqrt(fan_in)], zero
/// biases), deterministic in the seed.
MlpParams make_mlp(const std::vector<int>& dims, Activation act, std::uint64_t seed);

Eigen::VectorXd forward(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Batched forward; inputs and outputs are columns.
Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Activations recorded by a forward pass, for reverse mode.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = layer l output
};

Eigen::MatrixXd forward_batch_traced(const MlpParams& p,
                                     const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     ForwardTrace& trace);

/// Reverse-mode parameter gradient for one input/cotangent pair, flattened in
/// canonical order.
Eigen::VectorXd vjp(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& cotangent);

/// Batched reverse mode: cotangents are columns; the gradient is summed over
/// the batch. `trace` must come from forward_batch_traced on the same inputs.
Eigen::VectorXd vjp_batch(const MlpParams& p, const ForwardTrace& trace,
                          const Eigen::Ref<const Eigen::MatrixXd>& cotangents);

/// Forward-mode product: directional derivative of the output along a flat
/// parameter tangent.
Eigen::VectorXd jvp_params(const MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& tangent);

/// Divides each weight by its estimated top singular value when that value
/// exceeds 1. The per-layer power-iteration vector persists across calls.
MlpParams spectral_normalize(MlpParams p, int power_iters);

/// Power-iteration estimate of the top singular value (test hook).
double spectral_norm_estimate(const Eigen::MatrixXd& w, int power_iters);

Eigen::VectorXd flatten_params(const MlpParams& p);
void set_from_flat(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& flat);
void add_scaled_flat(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& flat, double scale);

/// SGD with optional momentum; velocity is kept flat in canonical order.
struct SgdState {
  Eigen::VectorXd velocity;
  double momentum = 0.0;
};
void sgd_step(MlpParams& p, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr,
              SgdState& state);

/// Binary checkpoint: magic + layer-shape header + flat little-endian f64
/// array, plus a JSON sidecar (path + ".json") with seed and architecture.
void save_checkpoint(const MlpParams& p, const std::string& path, std::uint64_t seed);
MlpParams load_checkpoint(const std::string& path);

}  // namespace proxrl
