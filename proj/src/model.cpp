#include "usd/model.hpp"

#include <cmath>
#include <stdexcept>

#include "usd/errors.hpp"

namespace usd {

namespace {

Layer make_layer(std::size_t out, std::size_t in, bool act, Rng& rng) {
  Layer l;
  l.w = Matrix(out, in);
  l.b.assign(out, 0.0);
  l.w_mask = Matrix(out, in, 1.0);
  l.b_mask.assign(out, 1.0);
  l.tanh_act = act;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : l.w.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  return l;
}

}  // namespace

ModelParams make_mlp(std::size_t d_in, std::size_t hidden, std::size_t bottleneck,
                     std::size_t classes, Rng rng) {
  ModelParams m;
  m.layers.push_back(make_layer(hidden, d_in, true, rng));
  m.layers.push_back(make_layer(hidden, hidden, true, rng));
  m.layers.push_back(make_layer(bottleneck, hidden, false, rng));
  m.layers.push_back(make_layer(classes, bottleneck, false, rng));
  return m;
}

std::pair<Matrix, ForwardTrace> forward(const ModelParams& params, const Matrix& x) {
  if (x.cols != params.input_dim()) {
    throw std::invalid_argument("forward: input width " + std::to_string(x.cols) +
                                " != " + std::to_string(params.input_dim()));
  }
  ForwardTrace trace;
  trace.input = x;
  Matrix a = x;
  for (const Layer& l : params.layers) {
    Matrix z = matmul(a, transpose(l.w));
    for (std::size_t i = 0; i < z.rows; ++i)
      for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += l.b[j];
    trace.pre.push_back(z);
    if (l.tanh_act) {
      for (double& v : z.data) v = std::tanh(v);
    }
    trace.post.push_back(z);
    a = std::move(z);
  }
  return {trace.post.back(), trace};
}

Gradients zeros_like(const ModelParams& params) {
  Gradients g;
  for (const Layer& l : params.layers) {
    LayerGrads lg;
    lg.dw = Matrix(l.w.rows, l.w.cols);
    lg.db.assign(l.b.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  return g;
}

Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   const Matrix& d_logits, const Matrix* d_bottleneck) {
  const std::size_t L = params.layers.size();
  if (trace.post.size() != L)
    throw std::invalid_argument("backward: trace depth mismatch");
  if (d_logits.rows != trace.post.back().rows ||
      d_logits.cols != trace.post.back().cols)
    throw std::invalid_argument("backward: d_logits shape mismatch");

  Gradients grads = zeros_like(params);
  Matrix delta = d_logits;  // gradient w.r.t. the current layer's output
  for (std::size_t li = L; li-- > 0;) {
    const Layer& l = params.layers[li];
    if (d_bottleneck != nullptr && li + 2 == L) {
      // Extra gradient injected at the bottleneck (encoder output).
      delta = add(delta, *d_bottleneck);
    }
    if (l.tanh_act) {
      // d tanh(z) = 1 - tanh(z)^2; trace.post holds tanh(z).
      const Matrix& act = trace.post[li];
      for (std::size_t i = 0; i < delta.data.size(); ++i)
        delta.data[i] *= 1.0 - act.data[i] * act.data[i];
    }
    const Matrix& in = (li == 0) ? trace.input : trace.post[li - 1];
    LayerGrads& lg = grads.layers[li];
    lg.dw = matmul(transpose(delta), in);
    for (std::size_t j = 0; j < l.b.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < delta.rows; ++i) s += delta(i, j);
      lg.db[j] = s;
    }
    // Mask before anything downstream sees the gradient.
    for (std::size_t i = 0; i < lg.dw.data.size(); ++i)
      lg.dw.data[i] *= l.w_mask.data[i];
    for (std::size_t j = 0; j < lg.db.size(); ++j) lg.db[j] *= l.b_mask[j];

    if (li > 0) delta = matmul(delta, l.w);
  }
  return grads;
}

std::pair<ModelParams, ModelParams> init_target_models(const ModelParams& source,
                                                       bool freeze_known_bias) {
  ModelParams student = source;
  Layer& cls = student.classifier();
  const std::size_t c_s = cls.w.rows;
  const std::size_t in = cls.w.cols;

  Layer expanded;
  expanded.w = Matrix(c_s + 1, in);
  expanded.b.assign(c_s + 1, 0.0);
  expanded.w_mask = Matrix(c_s + 1, in, 0.0);
  expanded.b_mask.assign(c_s + 1, freeze_known_bias ? 0.0 : 1.0);
  expanded.tanh_act = false;

  double bias_mean = 0.0;
  for (std::size_t r = 0; r < c_s; ++r) {
    for (std::size_t j = 0; j < in; ++j) expanded.w(r, j) = cls.w(r, j);
    expanded.b[r] = cls.b[r];
    bias_mean += cls.b[r];
  }
  bias_mean /= static_cast<double>(c_s);
  // Unknown row: zero weights, mid-pack bias, fully trainable.
  expanded.b[c_s] = bias_mean;
  for (std::size_t j = 0; j < in; ++j) expanded.w_mask(c_s, j) = 1.0;
  expanded.b_mask[c_s] = 1.0;

  cls = expanded;
  ModelParams teacher = student;
  return {std::move(student), std::move(teacher)};
}

SgdState make_sgd_state(const ModelParams& params) {
  SgdState s;
  Gradients z = zeros_like(params);
  s.velocity = std::move(z.layers);
  return s;
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr,
              double momentum, double weight_decay, SgdState& state) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    Layer& l = params.layers[li];
    const LayerGrads& g = grads.layers[li];
    LayerGrads& v = state.velocity[li];
    for (std::size_t i = 0; i < l.w.data.size(); ++i) {
      if (l.w_mask.data[i] == 0.0) continue;
      const double gi = g.dw.data[i];
      if (!std::isfinite(gi)) throw NumericError("sgd_step: non-finite weight gradient");
      v.dw.data[i] = momentum * v.dw.data[i] + gi + weight_decay * l.w.data[i];
      l.w.data[i] -= lr * v.dw.data[i];
    }
    for (std::size_t j = 0; j < l.b.size(); ++j) {
      if (l.b_mask[j] == 0.0) continue;
      const double gj = g.db[j];
      if (!std::isfinite(gj)) throw NumericError("sgd_step: non-finite bias gradient");
      v.db[j] = momentum * v.db[j] + gj + weight_decay * l.b[j];
      l.b[j] -= lr * v.db[j];
    }
  }
}

void ema_update(ModelParams& teacher, const ModelParams& student, double m) {
  if (!(m >= 0.0 && m <= 1.0))
    throw std::invalid_argument("ema_update: m outside [0,1]");
  if (teacher.layers.size() != student.layers.size())
    throw std::invalid_argument("ema_update: depth mismatch");
  for (std::size_t li = 0; li < teacher.layers.size(); ++li) {
    Layer& t = teacher.layers[li];
    const Layer& s = student.layers[li];
    if (t.w.rows != s.w.rows || t.w.cols != s.w.cols)
      throw std::invalid_argument("ema_update: shape mismatch");
    for (std::size_t i = 0; i < t.w.data.size(); ++i)
      t.w.data[i] = m * t.w.data[i] + (1.0 - m) * s.w.data[i];
    for (std::size_t j = 0; j < t.b.size(); ++j)
      t.b[j] = m * t.b[j] + (1.0 - m) * s.b[j];
  }
}

double ema_momentum_schedule(std::size_t epoch, double m_max) {
  const double m = 1.0 - 1.0 / static_cast<double>(epoch + 1);
  return std::min(m_max, m);
}

}  // namespace usd
