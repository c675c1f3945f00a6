#include "oefsmc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "oefsmc/error.hpp"
#include "oefsmc/rng.hpp"

namespace oefsmc::nn {

namespace {

std::string layer_name(std::size_t index, LayerKind kind) {
  return "layer " + std::to_string(index) + " (" + to_string(kind) + ")";
}

Shape param_weight_shape(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::dense:
    case LayerKind::softmax_head:
      return {s.out, s.in};
    case LayerKind::conv2d:
      return {s.out, s.in, s.kernel, s.kernel};
    default:
      return {};
  }
}

Shape output_shape_of(std::size_t index, const LayerSpec& s, const Shape& in) {
  const auto fail = [&](const std::string& why) {
    throw ShapeError(layer_name(index, s.kind) + ": " + why + " (input " + shape_str(in) + ")");
  };
  switch (s.kind) {
    case LayerKind::dense:
    case LayerKind::softmax_head:
      if (s.in == 0 || s.out == 0) fail("zero feature count");
      if (in.size() != 1 || in[0] != s.in) fail("expects " + std::to_string(s.in) + " features");
      return {s.out};
    case LayerKind::conv2d: {
      if (s.in == 0 || s.out == 0 || s.kernel == 0 || s.stride == 0) fail("zero conv dimension");
      if (in.size() != 3 || in[0] != s.in) fail("expects " + std::to_string(s.in) + " input channels");
      const std::size_t h = in[1] + 2 * s.padding, w = in[2] + 2 * s.padding;
      if (h < s.kernel || w < s.kernel) fail("kernel larger than padded input");
      return {s.out, (h - s.kernel) / s.stride + 1, (w - s.kernel) / s.stride + 1};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::max_pool:
      if (s.kernel == 0) fail("zero pooling window");
      if (in.size() != 3 || in[1] < s.kernel || in[2] < s.kernel) fail("expects [C, H, W] at least window-sized");
      return {in[0], in[1] / s.kernel, in[2] / s.kernel};
    case LayerKind::flatten:
      return {shape_size(in)};
  }
  fail("unknown layer kind");
  return {};
}

std::size_t batch_of(const Tensor& t) { return t.rank() == 0 ? 0 : t.dim(0); }

Shape batched(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

void affine_forward(const Layer& L, const Tensor& x, Tensor& y) {
  const std::size_t n = batch_of(x), in = L.spec.in, out = L.spec.out;
  const double* W = L.weight.data().data();
  const double* b = L.bias.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in;
    double* yr = y.data().data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = W + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void affine_backward(const Layer& L, const Tensor& x, const Tensor& g, Tensor& dW, Tensor& db, Tensor* dx) {
  const std::size_t n = batch_of(x), in = L.spec.in, out = L.spec.out;
  const double* W = L.weight.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in;
    const double* gr = g.data().data() + r * out;
    double* dxr = dx ? dx->data().data() + r * in : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const double go = gr[o];
      if (go == 0.0) continue;
      db[o] += go;
      double* dw = dW.data().data() + o * in;
      const double* w = W + o * in;
      for (std::size_t i = 0; i < in; ++i) dw[i] += go * xr[i];
      if (dxr) {
        for (std::size_t i = 0; i < in; ++i) dxr[i] += go * w[i];
      }
    }
  }
}

struct ConvGeom {
  std::size_t ci, h, w, co, oh, ow, k, s, p;
};

ConvGeom conv_geom(const LayerSpec& s, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], out[0], out[1], out[2], s.kernel, s.stride, s.padding};
}

void conv_forward(const Layer& L, const ConvGeom& g, const Tensor& x, Tensor& y) {
  const std::size_t n = batch_of(x);
  const std::size_t in_sz = g.ci * g.h * g.w, out_sz = g.co * g.oh * g.ow;
  const double* W = L.weight.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in_sz;
    double* yr = y.data().data() + r * out_sz;
    for (std::size_t co = 0; co < g.co; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = L.bias[co];
          for (std::size_t ci = 0; ci < g.ci; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.s + ky) - static_cast<std::ptrdiff_t>(g.p);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.s + kx) - static_cast<std::ptrdiff_t>(g.p);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                acc += W[((co * g.ci + ci) * g.k + ky) * g.k + kx] *
                       xr[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
              }
            }
          }
          yr[(co * g.oh + oy) * g.ow + ox] = acc;
        }
      }
    }
  }
}

void conv_backward(const Layer& L, const ConvGeom& g, const Tensor& x, const Tensor& gy, Tensor& dW, Tensor& db,
                   Tensor* dx) {
  const std::size_t n = batch_of(x);
  const std::size_t in_sz = g.ci * g.h * g.w, out_sz = g.co * g.oh * g.ow;
  const double* W = L.weight.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in_sz;
    const double* gr = gy.data().data() + r * out_sz;
    double* dxr = dx ? dx->data().data() + r * in_sz : nullptr;
    for (std::size_t co = 0; co < g.co; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double go = gr[(co * g.oh + oy) * g.ow + ox];
          if (go == 0.0) continue;
          db[co] += go;
          for (std::size_t ci = 0; ci < g.ci; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.s + ky) - static_cast<std::ptrdiff_t>(g.p);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.s + kx) - static_cast<std::ptrdiff_t>(g.p);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                const std::size_t wi = ((co * g.ci + ci) * g.k + ky) * g.k + kx;
                const std::size_t xi = (ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix);
                dW[wi] += go * xr[xi];
                if (dxr) dxr[xi] += go * W[wi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::relu:
      return "relu";
    case LayerKind::max_pool:
      return "max-pool";
    case LayerKind::flatten:
      return "flatten";
    case LayerKind::softmax_head:
      return "softmax-head";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::max_pool, LayerKind::flatten,
                      LayerKind::softmax_head}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown layer kind '" + name + "'");
}

std::vector<Shape> infer_shapes(const Shape& input_shape, std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ShapeError("network has no layers");
  std::vector<Shape> shapes;
  shapes.reserve(specs.size());
  Shape cur = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    cur = output_shape_of(i, specs[i], cur);
    shapes.push_back(cur);
  }
  if (cur.size() != 1) throw ShapeError("network output " + shape_str(cur) + " is not a logit vector");
  return shapes;
}

std::size_t parameter_count(const Shape& input_shape, std::span<const LayerSpec> specs) {
  infer_shapes(input_shape, specs);
  std::size_t n = 0;
  for (const auto& s : specs) {
    if (s.has_params()) n += shape_size(param_weight_shape(s)) + s.out;
  }
  return n;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> specs, NetworkRole role, std::uint64_t seed)
    : input_shape_(std::move(input_shape)), role_(role) {
  Rng rng(stream_seed(seed, "init"));
  for (const auto& s : specs) {
    Layer L{s, {}, {}};
    if (s.has_params()) {
      L.weight = Tensor(param_weight_shape(s));
      L.bias = Tensor({s.out});
      const std::size_t fan_in = L.weight.size() / s.out;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& w : L.weight.data()) w = rng.uniform(-bound, bound);
    }
    layers_.push_back(std::move(L));
  }
  validate();
}

Network::Network(Shape input_shape, std::vector<Layer> layers, NetworkRole role)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), role_(role) {
  validate();
}

void Network::validate() {
  const auto sp = specs();
  shapes_ = infer_shapes(input_shape_, sp);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    const Shape ws = param_weight_shape(L.spec);
    const Shape bs = L.spec.has_params() ? Shape{L.spec.out} : Shape{};
    const bool ok = L.spec.has_params() ? (L.weight.shape() == ws && L.bias.shape() == bs)
                                        : (L.weight.empty() && L.bias.empty());
    if (!ok) {
      throw ShapeError(layer_name(i, L.spec.kind) + ": parameter shapes " + shape_str(L.weight.shape()) + "/" +
                       shape_str(L.bias.shape()) + " do not match spec");
    }
  }
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const auto& L : layers_) out.push_back(L.spec);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weight.size() + L.bias.size();
  return n;
}

ForwardResult forward(const Network& net, const Tensor& batch, bool keep_trace) {
  const Shape& want = net.input_shape();
  if (batch.rank() != want.size() + 1 || !std::equal(want.begin(), want.end(), batch.shape().begin() + 1)) {
    throw ShapeError(layer_name(0, net.layer(0).spec.kind) + ": batch " + shape_str(batch.shape()) +
                     " does not match network input " + shape_str(want));
  }
  const std::size_t n = batch.dim(0);
  ForwardResult res;
  Trace& tr = res.trace;
  if (keep_trace) {
    tr.activations.reserve(net.num_layers() + 1);
    tr.activations.push_back(batch);
    tr.pool_argmax.resize(net.num_layers());
  }
  Tensor cur = batch;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& L = net.layer(l);
    const Shape& in_shape = l == 0 ? want : net.output_shape(l - 1);
    const Shape& out_shape = net.output_shape(l);
    Tensor next;
    switch (L.spec.kind) {
      case LayerKind::dense:
      case LayerKind::softmax_head:
        next = Tensor(batched(n, out_shape));
        affine_forward(L, cur, next);
        break;
      case LayerKind::conv2d:
        next = Tensor(batched(n, out_shape));
        conv_forward(L, conv_geom(L.spec, in_shape, out_shape), cur, next);
        break;
      case LayerKind::relu:
        next = std::move(cur);
        for (double& v : next.data()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::max_pool: {
        next = Tensor(batched(n, out_shape));
        const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2], k = L.spec.kernel;
        const std::size_t oh = out_shape[1], ow = out_shape[2];
        std::vector<std::size_t>* arg = keep_trace ? &tr.pool_argmax[l] : nullptr;
        if (arg) arg->assign(next.size(), 0);
        for (std::size_t r = 0; r < n; ++r) {
          const double* xr = cur.data().data() + r * c * h * w;
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_i = 0;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t xi = (ch * h + oy * k + ky) * w + ox * k + kx;
                    if (xr[xi] > best) {
                      best = xr[xi];
                      best_i = xi;
                    }
                  }
                }
                const std::size_t yi = r * c * oh * ow + (ch * oh + oy) * ow + ox;
                next[yi] = best;
                if (arg) (*arg)[yi] = best_i;
              }
            }
          }
        }
        break;
      }
      case LayerKind::flatten:
        next = std::move(cur);
        next = next.reshaped(batched(n, out_shape));
        break;
    }
    if (keep_trace) tr.activations.push_back(next);
    cur = std::move(next);
  }
  res.logits = std::move(cur);
  return res;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& L : net.layers()) {
    g.weight.emplace_back(L.weight.shape());
    g.bias.emplace_back(L.bias.shape());
  }
  return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  if (other.weight.size() != weight.size()) throw ShapeError("gradient sets differ in layer count");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    if (weight[l].shape() != other.weight[l].shape() || bias[l].shape() != other.bias[l].shape()) {
      throw ShapeError("gradient shapes differ at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < weight[l].size(); ++i) weight[l][i] += scale * other.weight[l][i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += scale * other.bias[l][i];
  }
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& t : weight)
    for (double v : t.data()) s += v * v;
  for (const auto& t : bias)
    for (double v : t.data()) s += v * v;
  return s;
}

bool Gradients::all_finite() const {
  return std::all_of(weight.begin(), weight.end(), [](const Tensor& t) { return t.all_finite(); }) &&
         std::all_of(bias.begin(), bias.end(), [](const Tensor& t) { return t.all_finite(); });
}

Gradients backward(const Network& net, const Trace& trace, const Tensor& dlogits) {
  if (trace.empty()) throw StateError("backward called without a recorded forward pass");
  if (trace.activations.size() != net.num_layers() + 1) {
    throw StateError("forward trace does not belong to this network");
  }
  if (dlogits.shape() != trace.activations.back().shape()) {
    throw ShapeError("dlogits " + shape_str(dlogits.shape()) + " vs logits " +
                     shape_str(trace.activations.back().shape()));
  }
  Gradients grads = Gradients::zeros_like(net);
  Tensor g = dlogits;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const Layer& L = net.layer(l);
    const Tensor& x = trace.activations[l];
    const Shape& in_shape = l == 0 ? net.input_shape() : net.output_shape(l - 1);
    const bool need_dx = l > 0;
    Tensor dx;
    switch (L.spec.kind) {
      case LayerKind::dense:
      case LayerKind::softmax_head:
        if (need_dx) dx = Tensor(x.shape());
        affine_backward(L, x, g, grads.weight[l], grads.bias[l], need_dx ? &dx : nullptr);
        break;
      case LayerKind::conv2d:
        if (need_dx) dx = Tensor(x.shape());
        conv_backward(L, conv_geom(L.spec, in_shape, net.output_shape(l)), x, g, grads.weight[l], grads.bias[l],
                      need_dx ? &dx : nullptr);
        break;
      case LayerKind::relu:
        dx = std::move(g);
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (!(x[i] > 0.0)) dx[i] = 0.0;
        break;
      case LayerKind::max_pool: {
        dx = Tensor(x.shape());
        const auto& arg = trace.pool_argmax[l];
        const std::size_t in_sz = shape_size(in_shape), out_sz = shape_size(net.output_shape(l));
        for (std::size_t yi = 0; yi < g.size(); ++yi) {
          const std::size_t r = yi / out_sz;
          dx[r * in_sz + arg[yi]] += g[yi];
        }
        break;
      }
      case LayerKind::flatten:
        dx = g.reshaped(x.shape());
        break;
    }
    if (!need_dx) break;
    g = std::move(dx);
  }
  return grads;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax temperature must be positive");
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw IndexError("label " + std::to_string(label) + " outside [0, " + std::to_string(probabilities.size()) + ")");
  }
  return -std::log(std::clamp(probabilities[label], kProbEpsilon, 1.0));
}

double kl_divergence(std::span<const double> p_teacher, std::span<const double> p_student) {
  if (p_teacher.size() != p_student.size()) {
    throw ShapeError("kl_divergence: lengths " + std::to_string(p_teacher.size()) + " and " +
                     std::to_string(p_student.size()));
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p_teacher.size(); ++i) {
    const double p = std::max(p_teacher[i], kProbEpsilon);
    const double q = std::max(p_student[i], kProbEpsilon);
    kl += p_teacher[i] * std::log(p / q);
  }
  return kl;
}

LossAndGrad cross_entropy_loss(const Tensor& logits, std::span<const int> labels,
                               std::span<const double> class_weights) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy_loss: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (!class_weights.empty() && class_weights.size() != k) {
    throw ShapeError("cross_entropy_loss: class weight vector has length " + std::to_string(class_weights.size()));
  }
  LossAndGrad out{0.0, Tensor(logits.shape())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw IndexError("label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(k) + ")");
    }
    const auto y = static_cast<std::size_t>(labels[r]);
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    const auto p = softmax(logits.row(r));
    out.loss += w * cross_entropy(p, y);
    auto d = out.dlogits.row(r);
    for (std::size_t j = 0; j < k; ++j) d[j] = w * inv_n * (p[j] - (j == y ? 1.0 : 0.0));
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad distillation_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
  if (teacher_logits.shape() != student_logits.shape() || teacher_logits.rank() != 2) {
    throw ShapeError("distillation_loss: teacher " + shape_str(teacher_logits.shape()) + " vs student " +
                     shape_str(student_logits.shape()));
  }
  if (!(temperature > 0.0)) throw DomainError("distillation temperature must be positive");
  const std::size_t n = student_logits.dim(0), k = student_logits.dim(1);
  LossAndGrad out{0.0, Tensor(student_logits.shape())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double t2 = temperature * temperature;
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = softmax(teacher_logits.row(r), temperature);
    const auto q = softmax(student_logits.row(r), temperature);
    out.loss += t2 * kl_divergence(p, q);
    auto d = out.dlogits.row(r);
    for (std::size_t j = 0; j < k; ++j) d[j] = temperature * inv_n * (q[j] - p[j]);
  }
  out.loss *= inv_n;
  return out;
}

OptimizerState make_optimizer(const Network& net, double learning_rate, double momentum) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
  return {learning_rate, momentum, Gradients::zeros_like(net)};
}

void sgd_step(OptimizerState& state, Network& net, const Gradients& grads) {
  if (grads.weight.size() != net.num_layers() || state.velocity.weight.size() != net.num_layers()) {
    throw ShapeError("sgd_step: gradient/velocity layer count does not match network");
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (grads.weight[l].shape() != net.layer(l).weight.shape() || grads.bias[l].shape() != net.layer(l).bias.shape() ||
        state.velocity.weight[l].shape() != net.layer(l).weight.shape()) {
      throw ShapeError("sgd_step: shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient, step refused");
  const double mu = state.momentum, lr = state.learning_rate;
  const auto update = [&](Tensor& v, const Tensor& g, Tensor& theta) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] - lr * g[i];
      theta[i] += v[i];
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    update(state.velocity.weight[l], grads.weight[l], net.weight(l));
    update(state.velocity.bias[l], grads.bias[l], net.bias(l));
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "oefsmc-network-1";
  j["role"] = net.role() == NetworkRole::teacher ? "teacher" : "student";
  j["input_shape"] = net.input_shape();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& L : net.layers()) {
    nlohmann::json e;
    e["kind"] = to_string(L.spec.kind);
    e["in"] = L.spec.in;
    e["out"] = L.spec.out;
    e["kernel"] = L.spec.kernel;
    e["stride"] = L.spec.stride;
    e["padding"] = L.spec.padding;
    if (L.spec.has_params()) {
      e["weight"] = L.weight.values();
      e["bias"] = L.bias.values();
    }
    layers.push_back(std::move(e));
  }
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump() << '\n';
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("format") != "oefsmc-network-1") throw FormatError(path.string() + ": unknown network format");
    const Shape input = j.at("input_shape").get<Shape>();
    std::vector<Layer> layers;
    for (const auto& e : j.at("layers")) {
      LayerSpec s{layer_kind_from_string(e.at("kind").get<std::string>()),
                  e.at("in").get<std::size_t>(),
                  e.at("out").get<std::size_t>(),
                  e.at("kernel").get<std::size_t>(),
                  e.at("stride").get<std::size_t>(),
                  e.at("padding").get<std::size_t>()};
      Layer L{s, {}, {}};
      if (s.has_params()) {
        L.weight = Tensor(param_weight_shape(s), e.at("weight").get<std::vector<double>>());
        L.bias = Tensor({s.out}, e.at("bias").get<std::vector<double>>());
      }
      layers.push_back(std::move(L));
    }
    const auto role = j.at("role") == "teacher" ? NetworkRole::teacher : NetworkRole::student;
    return Network(input, std::move(layers), role);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace oefsmc::nn
