#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spurnet/matrix.hpp"
#include "spurnet/rng.hpp"
#include "spurnet/tensor.hpp"

namespace spurnet {

enum class Activation { kRelu, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Tensor weight;  // [in, out], trainable leaf
  Tensor bias;    // [out], trainable leaf
  Activation activation = Activation::kIdentity;
};

struct ForwardResult {
  Tensor logits;
  Tensor embedding;  // output of the designated embedding layer
};

/// Fully connected feed-forward net. One layer is designated the embedding
/// layer; its post-activation output is the representation used for
/// clustering and the contrastive loss. Defaults to the last hidden layer
/// (for a single-layer net the embedding coincides with the logits).
class DenseNetwork {
 public:
  DenseNetwork() = default;
  DenseNetwork(std::vector<DenseLayer> layers, std::size_t embedding_index);

  /// layer_sizes = {in, hidden..., out}; hidden layers relu, final identity.
  /// He-normal weight init, zero biases.
  static DenseNetwork make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t embedding_dim() const;
  std::size_t embedding_index() const { return embedding_index_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::vector<Tensor> parameters() const;
  std::vector<Tensor> last_layer_parameters() const;
  std::size_t num_weights() const;  // weight entries only, biases excluded

  ForwardResult forward(const Tensor& x) const;

  DenseNetwork clone() const;  // deep copy with fresh leaves

 private:
  std::vector<DenseLayer> layers_;
  std::size_t embedding_index_ = 0;
};

/// Shared layer loop: logits plus the tap at embedding_index. Used by the
/// dense forward, the masked forward and mask-constrained fine-tuning,
/// which differ only in how the effective weights are built.
ForwardResult forward_layers(const std::vector<Tensor>& weights, const std::vector<Tensor>& biases,
                             const std::vector<Activation>& activations,
                             std::size_t embedding_index, const Tensor& x);

struct OptimizerState {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-2;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter

  OptimizerState() = default;
  OptimizerState(double lr_, double momentum_, double weight_decay_,
                 const std::vector<Tensor>& params);
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
void sgd_step(const std::vector<Tensor>& params, OptimizerState& state);

void zero_grads(const std::vector<Tensor>& params);

// ---- inference helpers (no graph) ----

Matrix logits_of(const DenseNetwork& net, const Matrix& inputs);
Matrix embed(const DenseNetwork& net, const Matrix& inputs);
std::vector<int> predict(const DenseNetwork& net, const Matrix& inputs);
double accuracy(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels);

}  // namespace spurnet
