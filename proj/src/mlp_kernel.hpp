// Forward and reverse passes of the MLP, templated on the scalar so the same
// code yields gradients (double) and their directional derivatives (Dual).
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rocerf/models.hpp"

namespace rocerf::detail {

// Forward-mode dual number v + d*eps.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual& operator+=(Dual& a, Dual b) { return a = a + b; }

inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
inline Dual sigmoid(Dual z) {
  const double s = sigmoid(z.v);
  return {s, s * (1.0 - s) * z.d};
}

// log(1 + e^z)
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}
inline Dual softplus(Dual z) { return {softplus(z.v), sigmoid(z.v) * z.d}; }

inline constexpr double kLog2 = 0.69314718056994530942;

inline double centered_softplus(double z) { return softplus(z) - kLog2; }
inline Dual centered_softplus(Dual z) {
  Dual s = softplus(z);
  s.v -= kLog2;
  return s;
}

template <typename T>
T make_scalar(double v) {
  if constexpr (std::is_same_v<T, Dual>) {
    return Dual{v, 0.0};
  } else {
    return v;
  }
}

// Scratch buffers for one pass.
template <typename T>
struct MlpTape {
  std::vector<std::vector<T>> pre;   // z_l per hidden layer
  std::vector<std::vector<T>> post;  // a_0 = x, a_{l+1} = act(z_l)
};

// Returns f(x). params has shape.param_count() entries, x has input_dim.
template <typename T>
T mlp_forward(const MlpShape& shape, const T* params, const T* x, MlpTape<T>& tape) {
  const std::size_t layers = shape.hidden_layers;
  const std::size_t width = shape.hidden_width;
  tape.pre.assign(layers, {});
  tape.post.assign(layers + 1, {});
  tape.post[0].assign(x, x + shape.input_dim);
  const T* p = params;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? shape.input_dim : width;
    const std::vector<T>& a = tape.post[l];
    std::vector<T>& z = tape.pre[l];
    z.assign(width, make_scalar<T>(0.0));
    const T* bias = p + width * in;
    for (std::size_t o = 0; o < width; ++o) {
      T acc = bias[o];
      const T* w_row = p + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += w_row[i] * a[i];
      z[o] = acc;
    }
    p += width * in + width;
    std::vector<T>& next = tape.post[l + 1];
    next.resize(width);
    for (std::size_t o = 0; o < width; ++o) next[o] = centered_softplus(z[o]);
  }
  const std::vector<T>& last = tape.post[layers];
  const std::size_t in = layers == 0 ? shape.input_dim : width;
  T out = p[in];
  for (std::size_t i = 0; i < in; ++i) out += p[i] * last[i];
  return out;
}

// Reverse pass after mlp_forward with seed `upstream` = dL/df. Accumulates
// (+=) into dparams and/or dx when non-null.
template <typename T>
void mlp_backward(const MlpShape& shape, const T* params, const MlpTape<T>& tape, T upstream,
                  T* dparams, T* dx) {
  const std::size_t layers = shape.hidden_layers;
  const std::size_t width = shape.hidden_width;
  // Offsets of each layer's block.
  std::vector<std::size_t> offset(layers + 1, 0);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? shape.input_dim : width;
    offset[l + 1] = offset[l] + width * in + width;
  }
  const std::size_t head_in = layers == 0 ? shape.input_dim : width;
  const T* head = params + offset[layers];
  const std::vector<T>& last = tape.post[layers];

  std::vector<T> da(head_in);
  if (dparams != nullptr) {
    T* dhead = dparams + offset[layers];
    for (std::size_t i = 0; i < head_in; ++i) dhead[i] += upstream * last[i];
    dhead[head_in] += upstream;
  }
  for (std::size_t i = 0; i < head_in; ++i) da[i] = upstream * head[i];

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = l == 0 ? shape.input_dim : width;
    const T* w = params + offset[l];
    const std::vector<T>& z = tape.pre[l];
    const std::vector<T>& a = tape.post[l];
    std::vector<T> dz(width);
    for (std::size_t o = 0; o < width; ++o) dz[o] = da[o] * sigmoid(z[o]);
    if (dparams != nullptr) {
      T* dw = dparams + offset[l];
      T* db = dw + width * in;
      for (std::size_t o = 0; o < width; ++o) {
        for (std::size_t i = 0; i < in; ++i) dw[o * in + i] += dz[o] * a[i];
        db[o] += dz[o];
      }
    }
    if (l == 0 && dx == nullptr) break;
    std::vector<T> prev(in, make_scalar<T>(0.0));
    for (std::size_t o = 0; o < width; ++o) {
      const T* w_row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += w_row[i] * dz[o];
    }
    da = std::move(prev);
  }
  if (dx != nullptr) {
    for (std::size_t i = 0; i < shape.input_dim; ++i) dx[i] += da[i];
  }
}

}  // namespace rocerf::detail
