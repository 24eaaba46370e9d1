#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "usd/matrix.hpp"
#include "usd/rng.hpp"

namespace usd {

// One affine layer. Weight is [out x in]; a batch X [n x in] maps to
// X * W^T + b. Masks are 0/1 and mark trainable entries.
struct Layer {
  Matrix w;
  std::vector<double> b;
  Matrix w_mask;
  std::vector<double> b_mask;
  bool tanh_act = false;
};

// Feed-forward encoder + linear classifier. The classifier is the last
// layer; everything before it (including the bottleneck) is the encoder.
struct ModelParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().w.cols; }
  std::size_t class_count() const { return layers.back().w.rows; }
  std::size_t encoder_depth() const { return layers.size() - 1; }
  const Layer& classifier() const { return layers.back(); }
  Layer& classifier() { return layers.back(); }
};

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // activations per layer; post.back() = logits
};

struct LayerGrads {
  Matrix dw;
  std::vector<double> db;
};

struct Gradients {
  std::vector<LayerGrads> layers;
};

// tanh(d_in -> hidden) -> tanh(hidden -> hidden) -> linear bottleneck ->
// linear classifier. Xavier-uniform init, everything trainable.
ModelParams make_mlp(std::size_t d_in, std::size_t hidden, std::size_t bottleneck,
                     std::size_t classes, Rng rng);

std::pair<Matrix, ForwardTrace> forward(const ModelParams& params, const Matrix& x);

// Reverse-mode gradients of a loss whose gradient w.r.t. the logits is
// d_logits. An optional gradient may be injected at the bottleneck output
// (used when the triplet operates on features instead of logits). Entries
// with mask 0 come back zeroed.
Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   const Matrix& d_logits,
                   const Matrix* d_bottleneck = nullptr);

Gradients zeros_like(const ModelParams& params);

// Expands the C_s-way source classifier with an unknown output row
// (zero weights, bias = mean of known biases). Known rows are copied and
// frozen; set freeze_known_bias = false to leave their biases trainable.
std::pair<ModelParams, ModelParams> init_target_models(
    const ModelParams& source, bool freeze_known_bias = true);

struct SgdState {
  std::vector<LayerGrads> velocity;  // same shapes as the gradients
};

SgdState make_sgd_state(const ModelParams& params);

// Momentum SGD: v = mu*v + g + wd*w; w -= lr*v, applied only where the
// trainable mask is set. Throws NumericError on non-finite gradients.
void sgd_step(ModelParams& params, const Gradients& grads, double lr,
              double momentum, double weight_decay, SgdState& state);

// teacher <- m*teacher + (1-m)*student, elementwise over every parameter.
void ema_update(ModelParams& teacher, const ModelParams& student, double m);

// m(N) = min(m_max, 1 - 1/(N+1)) for epoch N >= 1.
double ema_momentum_schedule(std::size_t epoch, double m_max);

}  // namespace usd
