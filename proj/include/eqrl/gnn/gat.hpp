#pragma once

// Single-head graph attention network with a fixed three-layer shape and
// hand-written reverse mode.
//
//   z_i      = W^T h_i
//   e_ij     = LeakyReLU(a_src . z_i + a_dst . z_j)      for each edge j -> i
//   alpha_ij = softmax_j(e_ij)
//   h'_i     = act(sum_j alpha_ij z_j + b)
//
// Hidden layers use ELU; the head layer is linear.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/random.hpp"
#include "eqrl/rtree.hpp"
#include "eqrl/tensor.hpp"

namespace eqrl::gnn {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;  // (src, dst)

enum class Activation { Elu, Identity };

struct GatLayerParams {
  Tensor W;  // in x out
  Tensor a;  // 1 x 2*out; first half scores the receiving node, second the sender
  Tensor b;  // 1 x out
  double leaky_slope = 0.2;
  Activation activation = Activation::Elu;

  std::size_t in_dim() const { return W.rows(); }
  std::size_t out_dim() const { return W.cols(); }
};

constexpr std::size_t kHiddenDim = 30;
constexpr std::size_t kNumLayers = 3;

struct GatNetworkParams {
  std::array<GatLayerParams, kNumLayers> layers;
  std::size_t head_dim = 1;
  std::uint64_t seed = 0;
  // Bumped on every in-place update; traces taken at an older version are stale.
  std::uint64_t version = 0;

  std::size_t in_dim() const { return layers[0].in_dim(); }

  template <class F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers) {
      f(l.W);
      f(l.a);
      f(l.b);
    }
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : layers) {
      f(l.W);
      f(l.a);
      f(l.b);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const Tensor& t) { n += t.size(); });
    return n;
  }
};

struct Gradients {
  std::array<GatLayerParams, kNumLayers> layers;

  explicit Gradients(const GatNetworkParams& p) {
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      layers[l].W = Tensor(p.layers[l].W.rows(), p.layers[l].W.cols());
      layers[l].a = Tensor(1, p.layers[l].a.cols());
      layers[l].b = Tensor(1, p.layers[l].b.cols());
    }
  }

  template <class F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers) {
      f(l.W);
      f(l.a);
      f(l.b);
    }
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : layers) {
      f(l.W);
      f(l.a);
      f(l.b);
    }
  }

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      layers[l].W += o.layers[l].W;
      layers[l].a += o.layers[l].a;
      layers[l].b += o.layers[l].b;
    }
    return *this;
  }

  Gradients& operator*=(double s) {
    for_each_tensor([&](Tensor& t) { t *= s; });
    return *this;
  }

  double squared_norm() const {
    double s = 0;
    for_each_tensor([&](const Tensor& t) {
      for (double v : t.data()) s += v * v;
    });
    return s;
  }
};

namespace detail {

inline double leaky(double x, double slope) { return x > 0 ? x : slope * x; }
inline double leaky_grad(double x, double slope) { return x > 0 ? 1.0 : slope; }
inline double elu(double x) { return x > 0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0 ? 1.0 : std::exp(x); }

inline void check_edges(const Edges& edges, std::size_t n) {
  std::vector<char> self(n, 0);
  for (const auto& [s, d] : edges) {
    if (s >= n || d >= n) throw ShapeError("edge index out of range");
    if (s == d) self[s] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!self[i]) throw ShapeError("node " + std::to_string(i) + " has no self-loop");
}

}  // namespace detail

struct LayerTrace {
  Tensor input;   // N x in
  Tensor z;       // N x out
  Tensor pre;     // N x out, before activation
  std::vector<double> score;  // per edge, before LeakyReLU
  std::vector<double> alpha;  // per edge
  Tensor output;
};

inline LayerTrace gat_layer_forward_traced(const Tensor& h, const Edges& edges, const GatLayerParams& p) {
  if (h.cols() != p.in_dim()) throw ShapeError("layer input " + h.shape_string() + " vs W " + p.W.shape_string());
  if (p.a.size() != 2 * p.out_dim() || p.b.size() != p.out_dim()) throw ShapeError("attention/bias size mismatch");
  const std::size_t n = h.rows(), out = p.out_dim();
  detail::check_edges(edges, n);

  LayerTrace t;
  t.input = h;
  t.z = matmul(h, p.W);
  std::vector<double> s_recv(n, 0.0), s_send(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < out; ++k) {
      s_recv[i] += p.a[k] * t.z(i, k);
      s_send[i] += p.a[out + k] * t.z(i, k);
    }

  t.score.resize(edges.size());
  t.alpha.resize(edges.size());
  std::vector<double> mx(n, -INFINITY), denom(n, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [j, i] = edges[e];
    t.score[e] = s_recv[i] + s_send[j];
    mx[i] = std::max(mx[i], detail::leaky(t.score[e], p.leaky_slope));
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto i = edges[e].second;
    t.alpha[e] = std::exp(detail::leaky(t.score[e], p.leaky_slope) - mx[i]);
    denom[i] += t.alpha[e];
  }
  t.pre = Tensor(n, out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < out; ++k) t.pre(i, k) = p.b[k];
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [j, i] = edges[e];
    t.alpha[e] /= denom[i];
    for (std::size_t k = 0; k < out; ++k) t.pre(i, k) += t.alpha[e] * t.z(j, k);
  }
  t.output = t.pre;
  if (p.activation == Activation::Elu)
    for (double& v : t.output.data()) v = detail::elu(v);
  return t;
}

inline Tensor gat_layer_forward(const Tensor& h, const Edges& edges, const GatLayerParams& p) {
  return gat_layer_forward_traced(h, edges, p).output;
}

// Accumulates parameter gradients into g and returns dL/dinput.
inline Tensor gat_layer_backward(const LayerTrace& t, const Edges& edges, const GatLayerParams& p,
                                 const Tensor& d_out, GatLayerParams& g) {
  t.output.require_same(d_out);
  const std::size_t n = t.z.rows(), out = p.out_dim();
  Tensor d_pre = d_out;
  if (p.activation == Activation::Elu)
    for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre[i] *= detail::elu_grad(t.pre[i]);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < out; ++k) g.b[k] += d_pre(i, k);

  Tensor d_z(n, out);
  std::vector<double> d_alpha(edges.size()), weighted(n, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [j, i] = edges[e];
    double s = 0;
    for (std::size_t k = 0; k < out; ++k) {
      d_z(j, k) += t.alpha[e] * d_pre(i, k);
      s += d_pre(i, k) * t.z(j, k);
    }
    d_alpha[e] = s;
    weighted[i] += t.alpha[e] * s;
  }
  std::vector<double> d_recv(n, 0.0), d_send(n, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [j, i] = edges[e];
    const double d_score = t.alpha[e] * (d_alpha[e] - weighted[i]) * detail::leaky_grad(t.score[e], p.leaky_slope);
    d_recv[i] += d_score;
    d_send[j] += d_score;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < out; ++k) {
      g.a[k] += d_recv[i] * t.z(i, k);
      g.a[out + k] += d_send[i] * t.z(i, k);
      d_z(i, k) += d_recv[i] * p.a[k] + d_send[i] * p.a[out + k];
    }
  g.W += matmul_tn(t.input, d_z);
  return matmul_nt(d_z, p.W);
}

struct ForwardTrace {
  std::array<LayerTrace, kNumLayers> layers;
  Edges edges;
  std::uint64_t version = 0;
  const GatNetworkParams* params = nullptr;

  const Tensor& output() const { return layers.back().output; }
  std::size_t num_nodes() const { return output().rows(); }
};

inline ForwardTrace network_forward_traced(const Tensor& x, const Edges& edges, const GatNetworkParams& p) {
  ForwardTrace tr;
  tr.edges = edges;
  tr.version = p.version;
  tr.params = &p;
  const Tensor* h = &x;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    tr.layers[l] = gat_layer_forward_traced(*h, edges, p.layers[l]);
    h = &tr.layers[l].output;
  }
  return tr;
}

inline ForwardTrace network_forward_traced(const rtree::GraphEncoding& enc, const GatNetworkParams& p) {
  return network_forward_traced(enc.node_features, enc.edges, p);
}

inline Tensor network_forward(const rtree::GraphEncoding& enc, const GatNetworkParams& p) {
  return network_forward_traced(enc, p).output();
}

inline Gradients backward(const ForwardTrace& tr, const Tensor& d_output) {
  if (!tr.params) throw ProtocolError("backward on an empty trace");
  const GatNetworkParams& p = *tr.params;
  if (tr.version != p.version) throw ProtocolError("stale forward trace: parameters changed since the forward pass");
  Gradients g(p);
  Tensor d = d_output;
  for (std::size_t l = kNumLayers; l-- > 0;) d = gat_layer_backward(tr.layers[l], tr.edges, p.layers[l], d, g.layers[l]);
  return g;
}

// Readouts.

inline double critic_value(const ForwardTrace& tr) {
  const Tensor& o = tr.output();
  double s = 0;
  for (std::size_t i = 0; i < o.rows(); ++i) s += o(i, 0);
  return s / static_cast<double>(o.rows());
}

inline Tensor critic_upstream(const ForwardTrace& tr, double d_value) {
  Tensor d(tr.num_nodes(), tr.output().cols());
  for (std::size_t i = 0; i < d.rows(); ++i) d(i, 0) = d_value / static_cast<double>(d.rows());
  return d;
}

constexpr double kSigmaFloor = 1e-3;

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ActorOutput {
  double mu = 0;
  double sigma_raw = 0;
  double sigma = 1;
};

inline ActorOutput actor_output(const ForwardTrace& tr, std::size_t cursor) {
  const Tensor& o = tr.output();
  if (o.cols() != 2) throw ShapeError("actor head must be 2 wide");
  if (cursor >= o.rows()) throw ShapeError("cursor row out of range");
  ActorOutput a{o(cursor, 0), o(cursor, 1), 0};
  a.sigma = softplus(a.sigma_raw) + kSigmaFloor;
  return a;
}

// Upstream gradient for dL/dmu and dL/dsigma (sigma after softplus).
inline Tensor actor_upstream(const ForwardTrace& tr, std::size_t cursor, double d_mu, double d_sigma) {
  Tensor d(tr.num_nodes(), 2);
  d(cursor, 0) = d_mu;
  d(cursor, 1) = d_sigma * logistic(tr.output()(cursor, 1));
  return d;
}

// Parameters.

inline GatLayerParams init_layer(Rng& rng, std::size_t in, std::size_t out, Activation act) {
  GatLayerParams p;
  p.activation = act;
  p.W = Tensor(in, out);
  const double lim_w = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : p.W.data()) v = (2 * rng.uniform() - 1) * lim_w;
  p.a = Tensor(1, 2 * out);
  const double lim_a = std::sqrt(6.0 / static_cast<double>(2 * out + 1));
  for (double& v : p.a.data()) v = (2 * rng.uniform() - 1) * lim_a;
  p.b = Tensor(1, out);
  return p;
}

inline GatNetworkParams init_params(std::uint64_t seed, std::size_t head_dim, std::size_t in_dim = 7) {
  if (head_dim == 0 || in_dim == 0) throw ArgumentError("dimensions must be positive");
  Rng rng(seed);
  GatNetworkParams p;
  p.seed = seed;
  p.head_dim = head_dim;
  p.layers[0] = init_layer(rng, in_dim, kHiddenDim, Activation::Elu);
  p.layers[1] = init_layer(rng, kHiddenDim, kHiddenDim, Activation::Elu);
  p.layers[2] = init_layer(rng, kHiddenDim, head_dim, Activation::Identity);
  return p;
}

// Adam over every tensor of a network.
struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 5.0;  // <= 0 disables clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(GatNetworkParams& p, Gradients g) {
    if (cfg_.max_grad_norm > 0) {
      const double norm = std::sqrt(g.squared_norm());
      if (norm > cfg_.max_grad_norm) g *= cfg_.max_grad_norm / norm;
    }
    if (m_.empty()) {
      p.for_each_tensor([&](const Tensor& t) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
      });
    }
    ++t_;
    const double c1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::vector<const Tensor*> grads;
    g.for_each_tensor([&](const Tensor& t) { grads.push_back(&t); });
    std::size_t idx = 0;
    p.for_each_tensor([&](Tensor& w) {
      auto& m = m_[idx];
      auto& v = v_[idx];
      const Tensor& gr = *grads[idx];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gr[i];
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gr[i] * gr[i];
        w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      }
      ++idx;
    });
    ++p.version;
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace eqrl::gnn
