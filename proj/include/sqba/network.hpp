#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "sqba/tensor.hpp"

namespace sqba {

// Fully connected affine map on the flattened input.
// w is row-major [out x in], logits_o = sum_i w[o*in+i]*x_i + b_o.
struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<float> w;
  std::vector<float> b;
};

// Valid (unpadded) square convolution, stride 1.
// w layout: [out_c][in_c][k][k], one bias per output channel.
struct ConvLayer {
  int in_c = 0;
  int out_c = 0;
  int k = 0;
  int in_h = 0;
  int in_w = 0;
  std::vector<float> w;
  std::vector<float> b;

  int out_h() const { return in_h - k + 1; }
  int out_w() const { return in_w - k + 1; }
};

struct ReluLayer {};

using Layer = std::variant<DenseLayer, ConvLayer, ReluLayer>;

// Feed-forward classifier. Weights are stored as float32 (the on-disk
// format); all arithmetic runs in double. Immutable once built, so
// concurrent read-only use is safe.
struct Network {
  Shape input;
  int num_classes = 0;
  DataRange range;
  std::vector<Layer> layers;
};

namespace detail {

// Output length of a layer applied to a flat activation of length n.
inline std::size_t layer_output_size(const Layer& layer, std::size_t n) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    if (static_cast<std::size_t>(d->in) != n)
      throw std::invalid_argument("dense layer: input size mismatch");
    return static_cast<std::size_t>(d->out);
  }
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    if (static_cast<std::size_t>(c->in_c) * c->in_h * c->in_w != n)
      throw std::invalid_argument("conv layer: input size mismatch");
    return static_cast<std::size_t>(c->out_c) * c->out_h() * c->out_w();
  }
  return n;  // relu
}

inline void dense_forward(const DenseLayer& d, const std::vector<double>& x,
                          std::vector<double>& y) {
  y.assign(d.out, 0.0);
  for (int o = 0; o < d.out; ++o) {
    double s = d.b[o];
    const float* row = d.w.data() + static_cast<std::size_t>(o) * d.in;
    for (int i = 0; i < d.in; ++i) s += static_cast<double>(row[i]) * x[i];
    y[o] = s;
  }
}

inline void conv_forward(const ConvLayer& c, const std::vector<double>& x,
                         std::vector<double>& y) {
  const int oh = c.out_h(), ow = c.out_w();
  y.assign(static_cast<std::size_t>(c.out_c) * oh * ow, 0.0);
  for (int oc = 0; oc < c.out_c; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double s = c.b[oc];
        for (int ic = 0; ic < c.in_c; ++ic) {
          for (int ky = 0; ky < c.k; ++ky) {
            const float* wrow =
                c.w.data() + ((static_cast<std::size_t>(oc) * c.in_c + ic) * c.k + ky) * c.k;
            const double* xrow =
                x.data() + (static_cast<std::size_t>(ic) * c.in_h + oy + ky) * c.in_w + ox;
            for (int kx = 0; kx < c.k; ++kx) s += static_cast<double>(wrow[kx]) * xrow[kx];
          }
        }
        y[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = s;
      }
    }
  }
}

}  // namespace detail

// Per-layer weight gradients, same layout as the layer weights.
struct ParamGrads {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;
};

inline ParamGrads zero_param_grads(const Network& net) {
  ParamGrads g;
  g.w.resize(net.layers.size());
  g.b.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[l])) {
      g.w[l].assign(d->w.size(), 0.0);
      g.b[l].assign(d->b.size(), 0.0);
    } else if (const auto* c = std::get_if<ConvLayer>(&net.layers[l])) {
      g.w[l].assign(c->w.size(), 0.0);
      g.b[l].assign(c->b.size(), 0.0);
    }
  }
  return g;
}

// Checks that consecutive layer shapes compose and that the last layer
// emits num_classes logits. Throws std::invalid_argument otherwise.
inline void validate(const Network& net) {
  if (net.num_classes < 2) throw std::invalid_argument("network: need at least 2 classes");
  std::size_t n = net.input.size();
  if (n == 0) throw std::invalid_argument("network: empty input shape");
  for (const Layer& layer : net.layers) n = detail::layer_output_size(layer, n);
  if (n != static_cast<std::size_t>(net.num_classes))
    throw std::invalid_argument("network: final layer width " + std::to_string(n) +
                                " != num_classes " + std::to_string(net.num_classes));
}

// Raw class scores, length num_classes.
inline std::vector<double> forward(const Network& net, const Tensor& x) {
  if (x.shape != net.input) throw std::invalid_argument("forward: input shape mismatch");
  std::vector<double> cur = x.v;
  std::vector<double> next;
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      if (cur.size() != static_cast<std::size_t>(d->in))
        throw std::invalid_argument("forward: dense input mismatch");
      detail::dense_forward(*d, cur, next);
      cur.swap(next);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      if (cur.size() != static_cast<std::size_t>(c->in_c) * c->in_h * c->in_w)
        throw std::invalid_argument("forward: conv input mismatch");
      detail::conv_forward(*c, cur, next);
      cur.swap(next);
    } else {
      for (double& v : cur) v = v > 0.0 ? v : 0.0;
    }
  }
  if (cur.size() != static_cast<std::size_t>(net.num_classes))
    throw std::invalid_argument("forward: network does not emit num_classes logits");
  return cur;
}

// Numerically stable softmax; sums to 1.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// Index of the maximum; ties resolve to the lowest index so hard-label
// behavior is deterministic.
inline int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline int predict(const Network& net, const Tensor& x) {
  return argmax_lowest(forward(net, x));
}

inline double cross_entropy(const std::vector<double>& logits, int label) {
  const std::vector<double> p = softmax(logits);
  return -std::log(std::max(p[label], 1e-300));
}

// Backpropagates d(loss)/d(logits) to the input, optionally accumulating
// weight gradients into *pg (used by training).
inline Tensor input_gradient(const Network& net, const Tensor& x,
                             const std::vector<double>& dlogits, ParamGrads* pg = nullptr) {
  if (x.shape != net.input) throw std::invalid_argument("input_gradient: shape mismatch");
  // Forward, keeping each layer's input activation.
  std::vector<std::vector<double>> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(x.v);
  std::vector<double> next;
  for (const Layer& layer : net.layers) {
    const std::vector<double>& cur = acts.back();
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      detail::dense_forward(*d, cur, next);
      acts.push_back(next);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      detail::conv_forward(*c, cur, next);
      acts.push_back(next);
    } else {
      next = cur;
      for (double& v : next) v = v > 0.0 ? v : 0.0;
      acts.push_back(next);
    }
  }

  std::vector<double> grad = dlogits;
  std::vector<double> gin;
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const std::vector<double>& in = acts[l];
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[l])) {
      gin.assign(d->in, 0.0);
      for (int o = 0; o < d->out; ++o) {
        const double g = grad[o];
        const float* row = d->w.data() + static_cast<std::size_t>(o) * d->in;
        for (int i = 0; i < d->in; ++i) gin[i] += g * static_cast<double>(row[i]);
        if (pg) {
          double* wrow = pg->w[l].data() + static_cast<std::size_t>(o) * d->in;
          for (int i = 0; i < d->in; ++i) wrow[i] += g * in[i];
          pg->b[l][o] += g;
        }
      }
      grad.swap(gin);
    } else if (const auto* c = std::get_if<ConvLayer>(&net.layers[l])) {
      const int oh = c->out_h(), ow = c->out_w();
      gin.assign(in.size(), 0.0);
      for (int oc = 0; oc < c->out_c; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const double g = grad[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
            if (g == 0.0) continue;
            for (int ic = 0; ic < c->in_c; ++ic) {
              for (int ky = 0; ky < c->k; ++ky) {
                const std::size_t wbase =
                    ((static_cast<std::size_t>(oc) * c->in_c + ic) * c->k + ky) * c->k;
                const std::size_t xbase =
                    (static_cast<std::size_t>(ic) * c->in_h + oy + ky) * c->in_w + ox;
                for (int kx = 0; kx < c->k; ++kx) {
                  gin[xbase + kx] += g * static_cast<double>(c->w[wbase + kx]);
                  if (pg) pg->w[l][wbase + kx] += g * in[xbase + kx];
                }
              }
            }
            if (pg) pg->b[l][oc] += g;
          }
        }
      }
      grad.swap(gin);
    } else {
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (in[i] <= 0.0) grad[i] = 0.0;
    }
  }
  return Tensor(std::move(grad), net.input);
}

// Gradient of the softmax cross-entropy loss at class c w.r.t. the input.
inline Tensor loss_grad_input(const Network& net, const Tensor& x, int c) {
  if (c < 0 || c >= net.num_classes) throw std::invalid_argument("loss_grad_input: bad class");
  std::vector<double> dlogits = softmax(forward(net, x));
  dlogits[c] -= 1.0;
  return input_gradient(net, x, dlogits);
}

// Gradient of the softmax probability of class c w.r.t. the input.
inline Tensor prob_grad_input(const Network& net, const Tensor& x, int c) {
  if (c < 0 || c >= net.num_classes) throw std::invalid_argument("prob_grad_input: bad class");
  const std::vector<double> p = softmax(forward(net, x));
  std::vector<double> dlogits(p.size());
  for (std::size_t j = 0; j < p.size(); ++j)
    dlogits[j] = p[c] * ((static_cast<int>(j) == c ? 1.0 : 0.0) - p[j]);
  return input_gradient(net, x, dlogits);
}

// --- builders ------------------------------------------------------------

namespace detail {

inline void he_init(std::vector<float>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (float& v : w) v = static_cast<float>(dist(rng));
}

}  // namespace detail

inline DenseLayer make_dense(int in, int out, std::mt19937_64& rng) {
  DenseLayer d;
  d.in = in;
  d.out = out;
  d.w.resize(static_cast<std::size_t>(in) * out);
  d.b.assign(out, 0.0f);
  detail::he_init(d.w, in, rng);
  return d;
}

inline ConvLayer make_conv(int in_c, int out_c, int k, int in_h, int in_w,
                           std::mt19937_64& rng) {
  ConvLayer c;
  c.in_c = in_c;
  c.out_c = out_c;
  c.k = k;
  c.in_h = in_h;
  c.in_w = in_w;
  c.w.resize(static_cast<std::size_t>(out_c) * in_c * k * k);
  c.b.assign(out_c, 0.0f);
  detail::he_init(c.w, static_cast<std::size_t>(in_c) * k * k, rng);
  return c;
}

// Plain multi-layer perceptron on the flattened input.
inline Network make_mlp(Shape input, const std::vector<int>& hidden, int num_classes,
                        std::uint64_t seed, DataRange range = {}) {
  std::mt19937_64 rng(seed);
  Network net;
  net.input = input;
  net.num_classes = num_classes;
  net.range = range;
  int prev = static_cast<int>(input.size());
  for (int h : hidden) {
    net.layers.emplace_back(make_dense(prev, h, rng));
    net.layers.emplace_back(ReluLayer{});
    prev = h;
  }
  net.layers.emplace_back(make_dense(prev, num_classes, rng));
  validate(net);
  return net;
}

// Two valid 3x3 convolutions followed by a small dense head.
inline Network make_cnn(Shape input, int num_classes, std::uint64_t seed,
                        DataRange range = {}) {
  std::mt19937_64 rng(seed);
  Network net;
  net.input = input;
  net.num_classes = num_classes;
  net.range = range;
  const int c1 = 8, c2 = 8, k = 3;
  net.layers.emplace_back(make_conv(input.channels, c1, k, input.height, input.width, rng));
  net.layers.emplace_back(ReluLayer{});
  const int h1 = input.height - k + 1, w1 = input.width - k + 1;
  net.layers.emplace_back(make_conv(c1, c2, k, h1, w1, rng));
  net.layers.emplace_back(ReluLayer{});
  const int h2 = h1 - k + 1, w2 = w1 - k + 1;
  net.layers.emplace_back(make_dense(c2 * h2 * w2, 64, rng));
  net.layers.emplace_back(ReluLayer{});
  net.layers.emplace_back(make_dense(64, num_classes, rng));
  validate(net);
  return net;
}

// Single affine layer with explicit weights; handy for closed-form checks.
inline Network make_linear(Shape input, int num_classes, std::vector<float> w,
                           std::vector<float> b, DataRange range = {}) {
  Network net;
  net.input = input;
  net.num_classes = num_classes;
  net.range = range;
  DenseLayer d;
  d.in = static_cast<int>(input.size());
  d.out = num_classes;
  d.w = std::move(w);
  d.b = std::move(b);
  net.layers.emplace_back(std::move(d));
  validate(net);
  return net;
}

}  // namespace sqba
