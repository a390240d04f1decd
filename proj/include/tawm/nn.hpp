#pragma once

// Minimal dense MLP stack: parameter store, taped forward pass, reverse-mode
// backward pass, Adam, finite-difference gradient checking and the binary
// checkpoint format shared by every model in the project.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tawm/errors.hpp"
#include "tawm/rng.hpp"

namespace tawm::nn {

enum class Activation { Identity, SiLU, ReLU, Tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "silu") return Activation::SiLU;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

template <class T>
inline T activate(Activation a, T x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::SiLU: return x / (T(1) + std::exp(-x));
    case Activation::ReLU: return x > T(0) ? x : T(0);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

// Derivative with respect to the pre-activation. ReLU uses the 0 subgradient at 0.
template <class T>
inline T activate_grad(Activation a, T x) {
  switch (a) {
    case Activation::Identity: return T(1);
    case Activation::SiLU: {
      const T s = T(1) / (T(1) + std::exp(-x));
      return s * (T(1) + x * (T(1) - s));
    }
    case Activation::ReLU: return x > T(0) ? T(1) : T(0);
    case Activation::Tanh: {
      const T t = std::tanh(x);
      return T(1) - t * t;
    }
  }
  return T(1);
}

// Architecture descriptor. `sizes` lists every width from input to output.
struct MlpSpec {
  std::string name;
  std::vector<std::size_t> sizes;
  Activation hidden = Activation::SiLU;
  Activation output = Activation::Identity;

  std::size_t num_layers() const { return sizes.empty() ? 0 : sizes.size() - 1; }
  std::size_t input_width() const { return sizes.empty() ? 0 : sizes.front(); }
  std::size_t output_width() const { return sizes.empty() ? 0 : sizes.back(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return n;
  }

  Activation layer_activation(std::size_t l) const { return l + 1 == num_layers() ? output : hidden; }

  nlohmann::json to_json() const {
    return {{"name", name}, {"sizes", sizes}, {"hidden", to_string(hidden)}, {"output", to_string(output)}};
  }

  static MlpSpec from_json(const nlohmann::json& j) {
    MlpSpec s;
    s.name = j.at("name").get<std::string>();
    s.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    s.hidden = activation_from_string(j.at("hidden").get<std::string>());
    s.output = activation_from_string(j.at("output").get<std::string>());
    return s;
  }

  bool operator==(const MlpSpec&) const = default;
};

// Flat parameter storage for one MLP. Layer l owns a weight matrix stored
// input-major ([in][out]) followed by its bias vector.
template <class T>
class ParamStore {
 public:
  ParamStore() = default;

  explicit ParamStore(MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.sizes.size() < 2) throw ShapeError(spec_.name + ": an MLP needs at least input and output widths");
    offsets_.reserve(spec_.num_layers() + 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
      offsets_.push_back(off);
      off += spec_.sizes[l] * spec_.sizes[l + 1] + spec_.sizes[l + 1];
    }
    offsets_.push_back(off);
    values_.assign(off, T(0));
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return spec_.num_layers(); }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + spec_.sizes[l] * spec_.sizes[l + 1]; }

  std::span<T> weights(std::size_t l) {
    return {values_.data() + weight_offset(l), spec_.sizes[l] * spec_.sizes[l + 1]};
  }
  std::span<const T> weights(std::size_t l) const {
    return {values_.data() + weight_offset(l), spec_.sizes[l] * spec_.sizes[l + 1]};
  }
  std::span<T> bias(std::size_t l) { return {values_.data() + bias_offset(l), spec_.sizes[l + 1]}; }
  std::span<const T> bias(std::size_t l) const { return {values_.data() + bias_offset(l), spec_.sizes[l + 1]}; }

  // Matrix-style access: W(out, in) of layer l.
  T& weight(std::size_t l, std::size_t out, std::size_t in) {
    return values_[weight_offset(l) + in * spec_.sizes[l + 1] + out];
  }
  T weight(std::size_t l, std::size_t out, std::size_t in) const {
    return values_[weight_offset(l) + in * spec_.sizes[l + 1] + out];
  }

  // Human-readable name of the tensor element at a flat index.
  std::string parameter_name(std::size_t flat) const {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      if (flat < bias_offset(l)) {
        const std::size_t k = flat - weight_offset(l);
        const std::size_t out = spec_.sizes[l + 1];
        return spec_.name + ".l" + std::to_string(l) + ".weight[" + std::to_string(k % out) + "," +
               std::to_string(k / out) + "]";
      }
      if (flat < offsets_[l + 1]) {
        return spec_.name + ".l" + std::to_string(l) + ".bias[" + std::to_string(flat - bias_offset(l)) + "]";
      }
    }
    return spec_.name + "[out of range " + std::to_string(flat) + "]";
  }

  void set_zero() { std::fill(values_.begin(), values_.end(), T(0)); }

  void set_name(std::string name) { spec_.name = std::move(name); }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out(spec_);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  MlpSpec spec_;
  std::vector<T> values_;
  std::vector<std::size_t> offsets_;
};

// Uniform fan-in initialisation: every weight and bias of layer l is drawn from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
void init_uniform_fan_in(ParamStore<T>& p, Rng& rng) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.spec().sizes[l]));
    for (auto& w : p.weights(l)) w = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& b : p.bias(l)) b = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <class T>
ParamStore<T> make_params(const MlpSpec& spec, Rng& rng) {
  ParamStore<T> p(spec);
  init_uniform_fan_in(p, rng);
  return p;
}

// Recorded forward pass. Ops alternate affine / activation per layer; each op
// keeps the value it consumed, which is all the backward pass needs.
template <class T>
struct GradTape {
  enum class OpKind { Affine, Activation };
  struct Op {
    OpKind kind;
    std::size_t layer;
    std::vector<T> input;
  };

  const ParamStore<T>* params = nullptr;
  std::vector<T> input;
  std::vector<T> output;
  std::vector<Op> ops;

  // Recomputes the forward pass from the recorded input using the recorded ops.
  std::vector<T> replay() const {
    std::vector<T> x = input;
    for (const Op& op : ops) {
      if (op.kind == OpKind::Affine) {
        x = affine(op.layer, x);
      } else {
        const Activation act = params->spec().layer_activation(op.layer);
        for (auto& v : x) v = activate(act, v);
      }
    }
    return x;
  }

  std::vector<T> affine(std::size_t l, std::span<const T> x) const {
    const auto& s = params->spec().sizes;
    const std::size_t in = s[l], out = s[l + 1];
    auto w = params->weights(l);
    auto b = params->bias(l);
    std::vector<T> y(b.begin(), b.end());
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = x[i];
      const T* wi = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) y[o] += xi * wi[o];
    }
    return y;
  }
};

template <class T>
struct ForwardResult {
  std::vector<T> output;
  GradTape<T> tape;
};

template <class T>
void check_input_width(const ParamStore<T>& p, std::size_t got) {
  if (got != p.spec().input_width()) {
    throw ShapeError(p.spec().name + " layer 0: expected input width " + std::to_string(p.spec().input_width()) +
                     ", got " + std::to_string(got));
  }
}

template <class T>
ForwardResult<T> mlp_forward(const ParamStore<T>& p, std::span<const T> input) {
  check_input_width(p, input.size());
  ForwardResult<T> r;
  r.tape.params = &p;
  r.tape.input.assign(input.begin(), input.end());
  r.tape.ops.reserve(2 * p.num_layers());
  std::vector<T> x(input.begin(), input.end());
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    std::vector<T> y = r.tape.affine(l, x);
    r.tape.ops.push_back({GradTape<T>::OpKind::Affine, l, std::move(x)});
    const Activation act = p.spec().layer_activation(l);
    if (act == Activation::Identity) {
      x = std::move(y);
      continue;
    }
    x.resize(y.size());
    for (std::size_t o = 0; o < y.size(); ++o) x[o] = activate(act, y[o]);
    r.tape.ops.push_back({GradTape<T>::OpKind::Activation, l, std::move(y)});
  }
  r.tape.output = x;
  r.output = std::move(x);
  return r;
}

// Reverse pass over a tape. Parameter gradients are accumulated into `grads`
// (which must share the tape's architecture); the gradient with respect to the
// network input is returned. `trace`, when given, receives the op indices in
// visiting order.
template <class T>
std::vector<T> mlp_backward(const GradTape<T>& tape, std::span<const T> output_grad, ParamStore<T>& grads,
                            std::vector<std::size_t>* trace = nullptr) {
  const ParamStore<T>& p = *tape.params;
  if (output_grad.size() != p.spec().output_width()) {
    throw ShapeError(p.spec().name + " layer " + std::to_string(p.num_layers() - 1) + ": output gradient width " +
                     std::to_string(output_grad.size()) + " != " + std::to_string(p.spec().output_width()));
  }
  if (grads.size() != p.size() || grads.spec().sizes != p.spec().sizes) {
    throw ShapeError(p.spec().name + ": gradient store does not match the tape's architecture");
  }
  std::vector<T> g(output_grad.begin(), output_grad.end());
  for (std::size_t k = tape.ops.size(); k-- > 0;) {
    const auto& op = tape.ops[k];
    if (trace) trace->push_back(k);
    if (op.kind == GradTape<T>::OpKind::Activation) {
      const Activation act = p.spec().layer_activation(op.layer);
      for (std::size_t o = 0; o < g.size(); ++o) g[o] *= activate_grad(act, op.input[o]);
      continue;
    }
    const std::size_t l = op.layer;
    const std::size_t in = p.spec().sizes[l], out = p.spec().sizes[l + 1];
    auto w = p.weights(l);
    auto dw = grads.weights(l);
    auto db = grads.bias(l);
    std::vector<T> gin(in, T(0));
    for (std::size_t o = 0; o < out; ++o) db[o] += g[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = op.input[i];
      const T* wi = w.data() + i * out;
      T* dwi = dw.data() + i * out;
      T acc = T(0);
      for (std::size_t o = 0; o < out; ++o) {
        dwi[o] += xi * g[o];
        acc += wi[o] * g[o];
      }
      gin[i] = acc;
    }
    g = std::move(gin);
  }
  return g;
}

// Convenience form returning a fresh gradient store.
template <class T>
ParamStore<T> mlp_param_grads(const GradTape<T>& tape, std::span<const T> output_grad) {
  ParamStore<T> grads(tape.params->spec());
  mlp_backward(tape, output_grad, grads);
  return grads;
}

// Reusable buffers for tape-free inference.
template <class T>
struct InferScratch {
  std::vector<T> a, b;
};

// Tape-free batched inference. `x` holds `batch` row-major inputs, `y`
// receives `batch` row-major outputs.
template <class T>
void mlp_infer_batch(const ParamStore<T>& p, std::span<const T> x, std::size_t batch, std::span<T> y,
                     InferScratch<T>& scratch) {
  const auto& s = p.spec().sizes;
  if (x.size() != batch * s.front()) {
    throw ShapeError(p.spec().name + " layer 0: input buffer holds " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(batch) + " x " + std::to_string(s.front()));
  }
  if (y.size() != batch * s.back()) throw ShapeError(p.spec().name + ": output buffer has the wrong size");
  const T* cur = x.data();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::size_t in = s[l], out = s[l + 1];
    const bool last = l + 1 == p.num_layers();
    T* dst;
    if (last) {
      dst = y.data();
    } else {
      auto& buf = (l % 2 == 0) ? scratch.a : scratch.b;
      buf.resize(batch * out);
      dst = buf.data();
    }
    auto w = p.weights(l);
    auto bias = p.bias(l);
    const Activation act = p.spec().layer_activation(l);
    // Four rows share each weight-row load.
    std::size_t r = 0;
    for (; r + 4 <= batch; r += 4) {
      T* __restrict y0 = dst + r * out;
      T* __restrict y1 = y0 + out;
      T* __restrict y2 = y1 + out;
      T* __restrict y3 = y2 + out;
      const T* x0 = cur + r * in;
      for (std::size_t o = 0; o < out; ++o) y0[o] = y1[o] = y2[o] = y3[o] = bias[o];
      for (std::size_t i = 0; i < in; ++i) {
        const T a0 = x0[i], a1 = x0[in + i], a2 = x0[2 * in + i], a3 = x0[3 * in + i];
        const T* __restrict wi = w.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) {
          const T wv = wi[o];
          y0[o] += a0 * wv;
          y1[o] += a1 * wv;
          y2[o] += a2 * wv;
          y3[o] += a3 * wv;
        }
      }
    }
    for (; r < batch; ++r) {
      T* __restrict yr = dst + r * out;
      const T* xr = cur + r * in;
      std::copy(bias.begin(), bias.end(), yr);
      for (std::size_t i = 0; i < in; ++i) {
        const T xi = xr[i];
        const T* __restrict wi = w.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wi[o];
      }
    }
    if (act != Activation::Identity) {
      for (std::size_t k = 0; k < batch * out; ++k) dst[k] = activate(act, dst[k]);
    }
    cur = dst;
  }
}

template <class T>
std::vector<T> mlp_infer(const ParamStore<T>& p, std::span<const T> x) {
  check_input_width(p, x.size());
  InferScratch<T> scratch;
  std::vector<T> y(p.spec().output_width());
  mlp_infer_batch(p, x, 1, std::span<T>(y), scratch);
  return y;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ParamStore<T>& p, AdamConfig cfg) : config(cfg), m(p.size(), T(0)), v(p.size(), T(0)) {}
};

// Standard bias-corrected Adam. Gradients are checked for finiteness before any
// state is touched, so a failed call leaves params and state unchanged.
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError(params.spec().name + ": Adam shapes disagree (params " + std::to_string(params.size()) +
                     ", grads " + std::to_string(grads.size()) + ", moments " + std::to_string(state.m.size()) + ")");
  }
  auto g = grads.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(static_cast<double>(g[i]))) {
      throw NonFiniteError("non-finite gradient for parameter " + params.spec().name + " (" + params.parameter_name(i) +
                           ")");
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.eps);
  auto w = params.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g[i];
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g[i] * g[i];
    w[i] -= step_size * state.m[i] / (std::sqrt(state.v[i]) * inv_sqrt_bc2 + eps);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckOptions {
  double step = 1e-5;
  // 2: (f(x+h) - f(x-h)) / 2h. 4: the five-point stencil, whose smaller
  // truncation error allows a larger h and so less cancellation on losses of
  // order 10 with gradient entries near 1e-6.
  int stencil = 2;
  double tolerance = 1e-4;
  // Relative error is |a-b| / max(|a|, |b|, abs_floor).
  double abs_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // non-differentiable points (kinks)
  std::size_t worst_index = 0;
  bool passed = true;
};

// Compares `analytic` against central differences of `loss` at `params`.
// `loss` re-evaluates the scalar loss from the current contents of `params`.
// Coordinates where the loss has a kink (one-sided slopes disagree at two
// step sizes by a step-independent jump) are excluded from the comparison.
inline GradCheckReport grad_check(std::span<double> params, std::span<const double> analytic,
                                  const std::function<double()>& loss, GradCheckOptions opt = {}) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: gradient and parameter sizes differ");
  GradCheckReport rep;
  const double f0 = loss();
  double sum = 0.0;
  auto eval_at = [&](std::size_t i, double delta) {
    const double saved = params[i];
    params[i] = saved + delta;
    const double f = loss();
    params[i] = saved;
    return f;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double h = opt.step;
    const double fp = eval_at(i, h);
    const double fm = eval_at(i, -h);
    double fd = (fp - fm) / (2.0 * h);
    if (opt.stencil == 4) fd = (8.0 * (fp - fm) - (eval_at(i, 2 * h) - eval_at(i, -2 * h))) / (12.0 * h);
    const double a = analytic[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), opt.abs_floor});
    if (rel >= opt.tolerance) {
      const double jump_h = (fp - f0) / h - (f0 - fm) / h;
      const double fp2 = eval_at(i, h / 2), fm2 = eval_at(i, -h / 2);
      const double jump_h2 = (fp2 - f0) / (h / 2) - (f0 - fm2) / (h / 2);
      const bool kink = std::abs(jump_h) > 1e-3 * std::max(std::abs(fd), opt.abs_floor) &&
                        std::abs(jump_h2) > 0.75 * std::abs(jump_h);
      if (kink) {
        ++rep.excluded;
        continue;
      }
    }
    ++rep.checked;
    sum += rel;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
  }
  rep.mean_rel_error = rep.checked ? sum / static_cast<double>(rep.checked) : 0.0;
  rep.passed = rep.max_rel_error < opt.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoint format:
//   "TAWM1\n"
//   one line of compact JSON: {"meta": {...}, "networks": [MlpSpec...]}
//   little-endian float32 payload, networks in declaration order

inline constexpr std::string_view kCheckpointMagic = "TAWM1";

namespace detail {
inline void put_f32_le(std::ostream& os, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                         static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  os.write(bytes, 4);
}

inline float get_f32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint payload truncated");
  const std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                          (std::uint32_t(b[3]) << 24);
  return std::bit_cast<float>(u);
}
}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& os, const nlohmann::json& meta, const std::vector<const ParamStore<T>*>& nets) {
  nlohmann::json header;
  header["meta"] = meta;
  header["networks"] = nlohmann::json::array();
  for (const auto* n : nets) header["networks"].push_back(n->spec().to_json());
  os << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto* n : nets) {
    for (T v : n->values()) detail::put_f32_le(os, static_cast<float>(v));
  }
  if (!os) throw IoError("failed writing checkpoint");
}

template <class T>
struct Checkpoint {
  nlohmann::json meta;
  std::vector<ParamStore<T>> nets;

  const ParamStore<T>& net(const std::string& name) const {
    for (const auto& n : nets)
      if (n.spec().name == name) return n;
    throw IoError("checkpoint has no network named '" + name + "'");
  }
};

template <class T>
Checkpoint<T> read_checkpoint(std::istream& is) {
  std::string magic;
  if (!std::getline(is, magic) || magic != kCheckpointMagic) throw IoError("not a TAWM1 checkpoint (bad magic)");
  std::string line;
  if (!std::getline(is, line)) throw IoError("checkpoint header missing");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint<T> ck;
  ck.meta = header.at("meta");
  for (const auto& j : header.at("networks")) {
    ParamStore<T> p(MlpSpec::from_json(j));
    for (auto& v : p.values()) v = static_cast<T>(detail::get_f32_le(is));
    ck.nets.push_back(std::move(p));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint has trailing bytes");
  return ck;
}

}  // namespace tawm::nn
