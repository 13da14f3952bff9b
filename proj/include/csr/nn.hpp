#pragma once

// Small fixed-topology MLPs with exact reverse-mode gradients.
//
// Parameters live in one flat buffer, layer by layer: the weight block of a
// layer is stored input-major ([in][out]) followed by its bias vector. Hidden
// layers use ReLU, the output layer is affine.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "csr/random.hpp"
#include "json.hpp"

namespace csr::nn {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
struct Tape {
  // activations[0] is the input; activations[l] is the output of layer l
  // (post-ReLU for hidden layers).
  std::vector<std::vector<Real>> activations;

  std::span<const Real> output() const { return activations.back(); }
};

template <typename Real>
class Mlp {
  static_assert(std::is_floating_point_v<Real>);

 public:
  using value_type = Real;

  Mlp() = default;

  explicit Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
    for (auto w : widths_)
      if (w == 0) throw std::invalid_argument("layer widths must be positive");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weight_offset_.push_back(offset);
      offset += widths_[l] * widths_[l + 1];
      bias_offset_.push_back(offset);
      offset += widths_[l + 1];
    }
    params_.assign(offset, Real(0));
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_size() const { return widths_.front(); }
  std::size_t output_size() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  std::size_t num_params() const { return params_.size(); }

  std::span<Real> params() { return params_; }
  std::span<const Real> params() const { return params_; }

  // Uniform init with variance gain^2 / fan_in; biases zero.
  void init(Rng& rng, double hidden_gain = std::sqrt(2.0), double output_gain = 0.01) {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      const double gain = (l + 1 == num_layers()) ? output_gain : hidden_gain;
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Real* w = params_.data() + weight_offset_[l];
      for (std::size_t i = 0; i < in * out; ++i) w[i] = static_cast<Real>(dist(rng));
      std::fill_n(params_.data() + bias_offset_[l], out, Real(0));
    }
  }

  void forward(std::span<const Real> x, Tape<Real>& tape) const {
    check_input(x);
    tape.activations.resize(widths_.size());
    tape.activations[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      affine(l, tape.activations[l], tape.activations[l + 1]);
      if (l + 1 < num_layers())
        for (auto& v : tape.activations[l + 1]) v = v > Real(0) ? v : Real(0);
    }
  }

  std::vector<Real> predict(std::span<const Real> x) const {
    check_input(x);
    std::vector<Real> cur(x.begin(), x.end());
    std::vector<Real> next;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      affine(l, cur, next);
      if (l + 1 < num_layers())
        for (auto& v : next) v = v > Real(0) ? v : Real(0);
      cur.swap(next);
    }
    return cur;
  }

  // Accumulates d(loss)/d(params) into param_grad. If input_grad is non-empty
  // it receives d(loss)/d(input) (overwritten, not accumulated).
  void backward(const Tape<Real>& tape, std::span<const Real> output_grad, std::span<Real> param_grad,
                std::span<Real> input_grad = {}) const {
    if (tape.activations.size() != widths_.size()) throw std::invalid_argument("tape does not match network");
    if (output_grad.size() != output_size()) throw std::invalid_argument("output gradient has wrong size");
    if (param_grad.size() != params_.size()) throw std::invalid_argument("parameter gradient has wrong size");
    if (!input_grad.empty() && input_grad.size() != input_size())
      throw std::invalid_argument("input gradient has wrong size");

    std::vector<Real> dy(output_grad.begin(), output_grad.end());
    std::vector<Real> dx;
    for (std::size_t l = num_layers(); l-- > 0;) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      const auto& x = tape.activations[l];
      if (l + 1 < num_layers()) {
        const auto& post = tape.activations[l + 1];
        for (std::size_t o = 0; o < out; ++o)
          if (!(post[o] > Real(0))) dy[o] = Real(0);
      }
      const Real* w = params_.data() + weight_offset_[l];
      Real* gw = param_grad.data() + weight_offset_[l];
      Real* gb = param_grad.data() + bias_offset_[l];
      for (std::size_t o = 0; o < out; ++o) gb[o] += dy[o];
      const bool need_dx = l > 0 || !input_grad.empty();
      if (need_dx) dx.assign(in, Real(0));
      for (std::size_t i = 0; i < in; ++i) {
        const Real xi = x[i];
        Real* gwi = gw + i * out;
        if (xi != Real(0))
          for (std::size_t o = 0; o < out; ++o) gwi[o] += xi * dy[o];
        if (need_dx) dx[i] = dot(w + i * out, dy.data(), out);
      }
      if (l == 0) {
        if (!input_grad.empty()) std::copy(dx.begin(), dx.end(), input_grad.begin());
      } else {
        dy.swap(dx);
      }
    }
  }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](Real v) { return std::isfinite(v); });
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.widths_ == b.widths_ &&
           std::equal(a.params_.begin(), a.params_.end(), b.params_.begin(), b.params_.end(),
                      [](Real x, Real y) { return std::bit_cast<std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>>(x) ==
                                                  std::bit_cast<std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>>(y); });
  }

 private:
  void check_input(std::span<const Real> x) const {
    if (x.size() != input_size())
      throw std::invalid_argument("MLP input has size " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(input_size()));
  }

  void affine(std::size_t l, std::span<const Real> x, std::vector<Real>& y) const {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    const Real* w = params_.data() + weight_offset_[l];
    const Real* b = params_.data() + bias_offset_[l];
    y.assign(b, b + out);
    Real* yp = y.data();
    for (std::size_t i = 0; i < in; ++i) {
      const Real xi = x[i];
      if (xi == Real(0)) continue;
      const Real* wi = w + i * out;
      for (std::size_t o = 0; o < out; ++o) yp[o] += xi * wi[o];
    }
  }

  static Real dot(const Real* a, const Real* b, std::size_t n) {
    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
      s0 += a[i] * b[i];
      s1 += a[i + 1] * b[i + 1];
      s2 += a[i + 2] * b[i + 2];
      s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
  }

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<Real> params_;
};

// ---------------------------------------------------------------------------
// Categorical heads

template <typename Real>
struct Distribution {
  std::vector<Real> probs;
  std::vector<Real> log_probs;  // -inf for masked entries

  Real entropy() const {
    Real h = 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (probs[i] > Real(0)) h -= probs[i] * log_probs[i];
    return h;
  }
};

// Max-subtracted softmax. A non-empty mask marks allowed entries; at least one
// entry must be allowed.
template <typename Real>
Distribution<Real> softmax(std::span<const Real> logits, std::span<const std::uint8_t> mask = {}) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  if (!mask.empty() && mask.size() != logits.size()) throw std::invalid_argument("mask size mismatch");
  auto allowed = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  Real mx = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw NumericalError("non-finite logit");
    if (allowed(i)) mx = std::max(mx, logits[i]);
  }
  if (!std::isfinite(mx)) throw std::invalid_argument("softmax mask excludes every entry");
  Real z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (allowed(i)) z += std::exp(logits[i] - mx);
  const Real log_z = std::log(z);
  Distribution<Real> d;
  d.probs.resize(logits.size());
  d.log_probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed(i)) {
      d.log_probs[i] = logits[i] - mx - log_z;
      d.probs[i] = std::exp(d.log_probs[i]);
    } else {
      d.log_probs[i] = -std::numeric_limits<Real>::infinity();
      d.probs[i] = 0;
    }
  }
  return d;
}

template <typename Real>
std::size_t sample_index(std::span<const Real> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= Real(0)) continue;
    acc += static_cast<double>(probs[i]);
    last = i;
    if (u < acc) return i;
  }
  return last;
}

template <typename Real>
struct CategoricalSample {
  std::size_t index = 0;
  Real log_prob = 0;
  Distribution<Real> distribution;
};

template <typename Real>
CategoricalSample<Real> softmax_categorical(std::span<const Real> logits, Rng& rng,
                                            std::span<const std::uint8_t> mask = {}) {
  CategoricalSample<Real> s;
  s.distribution = softmax<Real>(logits, mask);
  s.index = sample_index<Real>(s.distribution.probs, rng);
  s.log_prob = s.distribution.log_probs[s.index];
  return s;
}

template <typename Real>
std::size_t argmax(std::span<const Real> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// d log p[index] / d logits = onehot(index) - p
template <typename Real>
void log_prob_gradient(const Distribution<Real>& d, std::size_t index, Real scale, std::span<Real> logit_grad) {
  for (std::size_t i = 0; i < d.probs.size(); ++i)
    logit_grad[i] += scale * ((i == index ? Real(1) : Real(0)) - d.probs[i]);
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename Real>
struct RmsPropState {
  std::vector<Real> mean_square;
  double learning_rate = 1e-4;
  double decay = 0.99;
  double epsilon = 1e-8;

  RmsPropState() = default;
  explicit RmsPropState(std::size_t n, double lr = 1e-4, double rho = 0.99, double eps = 1e-8)
      : mean_square(n, Real(0)), learning_rate(lr), decay(rho), epsilon(eps) {}
};

template <typename Real>
void rmsprop_step(std::span<Real> params, std::span<const Real> grads, RmsPropState<Real>& state) {
  if (params.size() != grads.size() || params.size() != state.mean_square.size())
    throw std::invalid_argument("rmsprop_step: shape mismatch");
  const Real rho = static_cast<Real>(state.decay);
  const Real lr = static_cast<Real>(state.learning_rate);
  const Real eps = static_cast<Real>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Real& v = state.mean_square[i];
    v = rho * v + (Real(1) - rho) * grads[i] * grads[i];
    params[i] -= lr * grads[i] / (std::sqrt(v) + eps);
  }
}

// Rescales grads in place so their L2 norm is at most max_norm; returns the
// norm before clipping.
template <typename Real>
double clip_global_norm(std::span<Real> grads, double max_norm) {
  double sq = 0.0;
  for (Real g : grads) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const Real scale = static_cast<Real>(max_norm / norm);
    for (Real& g : grads) g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Checkpoint blob: 8-byte magic, uint32 LE header length, JSON header, then
// the parameters as little-endian IEEE-754 values.

inline constexpr std::string_view kCheckpointMagic{"CSRMLP01", 8};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

template <typename U>
U get_le(std::string_view in, std::size_t pos) {
  if (pos + sizeof(U) > in.size()) throw std::runtime_error("checkpoint truncated");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return v;
}

}  // namespace detail

template <typename Real>
std::string serialize(const Mlp<Real>& mlp) {
  nlohmann::json header;
  header["dtype"] = sizeof(Real) == 4 ? "float32" : "float64";
  header["widths"] = mlp.widths();
  header["num_params"] = mlp.num_params();
  const std::string h = header.dump();
  std::string out(kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (Real v : mlp.params()) {
    if constexpr (sizeof(Real) == 4)
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    else
      detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

template <typename Real>
Mlp<Real> deserialize(std::string_view blob) {
  if (blob.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw std::runtime_error("not an MLP checkpoint (bad magic)");
  std::size_t pos = kCheckpointMagic.size();
  const auto hlen = detail::get_le<std::uint32_t>(blob, pos);
  pos += 4;
  if (pos + hlen > blob.size()) throw std::runtime_error("checkpoint truncated");
  const auto header = nlohmann::json::parse(blob.substr(pos, hlen));
  pos += hlen;
  const std::string dtype = header.at("dtype");
  Mlp<Real> mlp(header.at("widths").get<std::vector<std::size_t>>());
  if (header.at("num_params").get<std::size_t>() != mlp.num_params())
    throw std::runtime_error("checkpoint parameter count does not match its widths");
  auto p = mlp.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (dtype == "float32") {
      p[i] = static_cast<Real>(std::bit_cast<float>(detail::get_le<std::uint32_t>(blob, pos)));
      pos += 4;
    } else if (dtype == "float64") {
      p[i] = static_cast<Real>(std::bit_cast<double>(detail::get_le<std::uint64_t>(blob, pos)));
      pos += 8;
    } else {
      throw std::runtime_error("unknown checkpoint dtype " + dtype);
    }
  }
  if (pos != blob.size()) throw std::runtime_error("trailing bytes after checkpoint parameters");
  return mlp;
}

template <typename Real>
void save_checkpoint(const Mlp<Real>& mlp, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string blob = serialize(mlp);
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw std::runtime_error("failed writing " + path);
}

template <typename Real>
Mlp<Real> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize<Real>(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace csr::nn
