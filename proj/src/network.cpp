#include "spurnet/network.hpp"

#include <cmath>

namespace spurnet {

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ValueError("unknown activation: " + name);
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers, std::size_t embedding_index)
    : layers_(std::move(layers)), embedding_index_(embedding_index) {
  if (layers_.empty()) throw ValueError("DenseNetwork: no layers");
  if (embedding_index_ >= layers_.size())
    throw ValueError("DenseNetwork: embedding index out of range");
  if (layers_.size() >= 2 && embedding_index_ + 1 >= layers_.size() + 1)
    throw ValueError("DenseNetwork: embedding layer must not follow the classifier");
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
    if (layers_[l].weight.cols() != layers_[l + 1].weight.rows())
      throw ShapeError("DenseNetwork: adjacent layer dimensions not conformable");
}

DenseNetwork DenseNetwork::make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
  if (layer_sizes.size() < 2) throw ValueError("make_mlp: need at least input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    std::size_t in = layer_sizes[l], out = layer_sizes[l + 1];
    std::vector<double> w(in * out);
    double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : w) v = std_dev * rng.normal();
    DenseLayer layer;
    layer.weight = Tensor::param({in, out}, std::move(w));
    layer.bias = Tensor::param({out}, std::vector<double>(out, 0.0));
    layer.activation =
        (l + 2 < layer_sizes.size()) ? Activation::kRelu : Activation::kIdentity;
    layers.push_back(std::move(layer));
  }
  std::size_t emb = layers.size() >= 2 ? layers.size() - 2 : 0;
  return DenseNetwork(std::move(layers), emb);
}

std::size_t DenseNetwork::input_dim() const { return layers_.front().weight.rows(); }
std::size_t DenseNetwork::output_dim() const { return layers_.back().weight.cols(); }
std::size_t DenseNetwork::embedding_dim() const { return layers_[embedding_index_].weight.cols(); }

std::vector<Tensor> DenseNetwork::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> DenseNetwork::last_layer_parameters() const {
  return {layers_.back().weight, layers_.back().bias};
}

std::size_t DenseNetwork::num_weights() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.numel();
  return n;
}

ForwardResult DenseNetwork::forward(const Tensor& x) const {
  std::vector<Tensor> ws, bs;
  std::vector<Activation> acts;
  for (const auto& l : layers_) {
    ws.push_back(l.weight);
    bs.push_back(l.bias);
    acts.push_back(l.activation);
  }
  return forward_layers(ws, bs, acts, embedding_index_, x);
}

DenseNetwork DenseNetwork::clone() const {
  std::vector<DenseLayer> layers;
  for (const auto& l : layers_) {
    DenseLayer c;
    c.weight = Tensor::param(l.weight.shape(), l.weight.value());
    c.bias = Tensor::param(l.bias.shape(), l.bias.value());
    c.activation = l.activation;
    layers.push_back(std::move(c));
  }
  return DenseNetwork(std::move(layers), embedding_index_);
}

ForwardResult forward_layers(const std::vector<Tensor>& weights, const std::vector<Tensor>& biases,
                             const std::vector<Activation>& activations,
                             std::size_t embedding_index, const Tensor& x) {
  if (weights.empty() || weights.size() != biases.size() || weights.size() != activations.size())
    throw ShapeError("forward_layers: inconsistent layer lists");
  if (x.cols() != weights.front().rows())
    throw ShapeError("forward_layers: input width does not match first layer");
  Tensor h = x;
  Tensor embedding;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Tensor z = add_rowvec(matmul(h, weights[l]), biases[l]);
    h = activations[l] == Activation::kRelu ? relu(z) : z;
    if (l == embedding_index) embedding = h;
  }
  return {h, embedding};
}

OptimizerState::OptimizerState(double lr_, double momentum_, double weight_decay_,
                               const std::vector<Tensor>& params)
    : lr(lr_), momentum(momentum_), weight_decay(weight_decay_) {
  for (const auto& p : params) velocity.emplace_back(p.numel(), 0.0);
}

void sgd_step(const std::vector<Tensor>& params, OptimizerState& state) {
  if (state.velocity.size() != params.size())
    throw ValueError("sgd_step: velocity buffers do not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = const_cast<Tensor&>(params[i]).mutable_value();
    const auto& g = params[i].grad();
    auto& v = state.velocity[i];
    if (v.size() != p.size()) throw ValueError("sgd_step: buffer length mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      double grad = g.empty() ? 0.0 : g[j];
      v[j] = state.momentum * v[j] + grad + state.weight_decay * p[j];
      p[j] -= state.lr * v[j];
    }
  }
}

void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
}

Matrix logits_of(const DenseNetwork& net, const Matrix& inputs) {
  NoGradGuard ng;
  auto out = net.forward(Tensor::constant(inputs));
  return out.logits.to_matrix();
}

Matrix embed(const DenseNetwork& net, const Matrix& inputs) {
  NoGradGuard ng;
  auto out = net.forward(Tensor::constant(inputs));
  return out.embedding.to_matrix();
}

std::vector<int> predict(const DenseNetwork& net, const Matrix& inputs) {
  Matrix lg = logits_of(net, inputs);
  std::vector<int> out(lg.rows);
  for (std::size_t r = 0; r < lg.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < lg.cols; ++c)
      if (lg(r, c) > lg(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const DenseNetwork& net, const Matrix& inputs, const std::vector<int>& labels) {
  if (inputs.rows == 0) return 0.0;
  auto pred = predict(net, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace spurnet
