// SPDX-License-Identifier: Apache-2.0
#include "ptsc/layers.hpp"

#include <cmath>
#include <stdexcept>

PTSC_BEGIN_NAMESPACE
namespace layers {

Tensor uniform_tensor(Shape shape, Real bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t pad, Rng& rng)
    : padding(pad) {
  const Real bound = std::sqrt(Real(1) / static_cast<Real>(in_channels * kernel));
  weight = uniform_tensor({out_channels, in_channels, kernel}, bound, rng);
  bias = Tensor({out_channels}, true);
}

rf::LayerGeom Conv1d::geometry() const {
  return {static_cast<std::int64_t>(weight.dim(2)), 1, static_cast<std::int64_t>(padding)};
}

void Conv1d::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Affine::Affine(std::size_t in_features, std::size_t out_features, Rng& rng) {
  const Real bound = std::sqrt(Real(1) / static_cast<Real>(in_features));
  weight = uniform_tensor({out_features, in_features}, bound, rng);
  bias = Tensor({out_features}, true);
}

void Affine::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

MaskedBatchNorm::MaskedBatchNorm(std::size_t channels, Real mom, Real eps)
    : gamma({channels}, std::vector<Real>(channels, Real(1)), true),
      beta({channels}, true),
      running_mean({channels}),
      running_var({channels}, std::vector<Real>(channels, Real(1))),
      momentum(mom),
      epsilon(eps) {}

Tensor MaskedBatchNorm::forward(const Tensor& x, std::span<const rf::ValidInterval> valid, Mode mode) const {
  if (mode == Mode::eval) {
    return ops::batch_norm_inference(x, running_mean.data(), running_var.data(), gamma, beta, epsilon);
  }
  auto result = ops::masked_batch_norm(x, valid, gamma, beta, epsilon);
  // Handles share storage, so this updates the layer's own buffers.
  Tensor rm = running_mean, rv = running_var;
  auto mean = rm.mutable_data();
  auto var = rv.mutable_data();
  const auto m = static_cast<Real>(result.stats.count);
  const Real unbias = m > 1 ? m / (m - 1) : Real(1);
  for (std::size_t c = 0; c < mean.size(); ++c) {
    mean[c] = (1 - momentum) * mean[c] + momentum * result.stats.mean[c];
    var[c] = (1 - momentum) * var[c] + momentum * result.stats.variance[c] * unbias;
  }
  return result.output;
}

void MaskedBatchNorm::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void MaskedBatchNorm::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

ConvBlock::ConvBlock(std::size_t in_channels, BlockConfig config, Rng& rng) : config_(std::move(config)) {
  if (config_.kernels.empty()) throw std::invalid_argument("conv block needs at least one kernel");
  if (config_.channels == 0) throw std::invalid_argument("conv block needs a positive channel count");
  if ((config_.pool_window == 0) != (config_.pool_stride == 0)) {
    throw std::invalid_argument("conv block pool window and stride must both be set or both be 0");
  }
  std::size_t channels = in_channels;
  for (auto k : config_.kernels) {
    if (k == 0) throw std::invalid_argument("conv block kernel must be >= 1");
    if (config_.residual && k % 2 == 0) {
      throw std::invalid_argument("residual blocks need odd kernels so the shortcut matches the main path");
    }
    convs_.emplace_back(channels, config_.channels, k, (k - 1) / 2, rng);
    norms_.emplace_back(config_.channels);
    channels = config_.channels;
  }
  if (config_.residual && in_channels != config_.channels) {
    projection_ = true;
    shortcut_conv_ = Conv1d(in_channels, config_.channels, 1, 0, rng);
    shortcut_norm_ = MaskedBatchNorm(config_.channels);
  }
}

namespace {

std::vector<rf::ValidInterval> propagate_all(std::span<const rf::ValidInterval> valid, const rf::LayerGeom& geom,
                                             std::size_t extent) {
  std::vector<rf::ValidInterval> out;
  out.reserve(valid.size());
  for (const auto& v : valid) {
    out.push_back(rf::clamp_nonempty(rf::propagate_valid(v, geom), static_cast<std::int64_t>(extent)));
  }
  return out;
}

}  // namespace

FeatureMap ConvBlock::forward(const FeatureMap& input, Mode mode) const {
  Tensor y = input.values;
  std::vector<rf::ValidInterval> valid = input.valid;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    y = convs_[i].forward(y);
    valid = propagate_all(valid, convs_[i].geometry(), y.dim(2));
    y = norms_[i].forward(y, valid, mode);
    const bool last = i + 1 == convs_.size();
    if (!(config_.residual && last)) y = ops::relu(y);
  }
  if (config_.residual) {
    Tensor shortcut = input.values;
    if (projection_) shortcut = shortcut_norm_.forward(shortcut_conv_.forward(shortcut), input.valid, mode);
    y = ops::relu(ops::add(y, shortcut));
  }
  if (config_.pool_window > 0) {
    y = ops::max_pool1d(y, config_.pool_window, config_.pool_stride);
    const rf::LayerGeom pool{static_cast<std::int64_t>(config_.pool_window),
                             static_cast<std::int64_t>(config_.pool_stride), 0};
    valid = propagate_all(valid, pool, y.dim(2));
  }
  return {std::move(y), std::move(valid)};
}

std::vector<rf::LayerGeom> ConvBlock::geometry() const {
  std::vector<rf::LayerGeom> out;
  for (const auto& c : convs_) out.push_back(c.geometry());
  if (config_.pool_window > 0) {
    out.push_back({static_cast<std::int64_t>(config_.pool_window), static_cast<std::int64_t>(config_.pool_stride), 0});
  }
  return out;
}

void ConvBlock::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect_parameters(prefix + ".conv" + std::to_string(i), out);
    norms_[i].collect_parameters(prefix + ".bn" + std::to_string(i), out);
  }
  if (projection_) {
    shortcut_conv_.collect_parameters(prefix + ".shortcut.conv", out);
    shortcut_norm_.collect_parameters(prefix + ".shortcut.bn", out);
  }
}

void ConvBlock::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect_buffers(prefix + ".bn" + std::to_string(i), out);
  if (projection_) shortcut_norm_.collect_buffers(prefix + ".shortcut.bn", out);
}

RecurrentAggregator::RecurrentAggregator(std::size_t input_size, std::size_t hidden_size, Rng& rng)
    : input_size_(input_size), hidden_size_(hidden_size) {
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(hidden_size));
  w_input = uniform_tensor({4 * hidden_size, input_size}, bound, rng);
  w_hidden = uniform_tensor({4 * hidden_size, hidden_size}, bound, rng);
  std::vector<Real> b(4 * hidden_size, Real(0));
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) b[i] = Real(1);
  bias = Tensor({4 * hidden_size}, std::move(b), true);
}

Tensor RecurrentAggregator::forward(std::span<const Tensor> sequence) const {
  if (sequence.empty()) throw std::invalid_argument("recurrent aggregate: empty sequence");
  std::vector<std::size_t> lengths(sequence.front().dim(0), sequence.size());
  return forward(sequence, lengths);
}

Tensor RecurrentAggregator::forward(std::span<const Tensor> sequence, std::span<const std::size_t> lengths) const {
  if (sequence.empty()) throw std::invalid_argument("recurrent aggregate: empty sequence");
  const std::size_t B = sequence.front().dim(0), H = hidden_size_;
  if (lengths.size() != B) throw std::invalid_argument("recurrent aggregate: need one length per sample");
  for (const auto& z : sequence) {
    if (z.rank() != 2 || z.dim(0) != B || z.dim(1) != input_size_) {
      throw std::invalid_argument("recurrent aggregate: every step must be [" + std::to_string(B) + "," +
                                  std::to_string(input_size_) + "], got " + shape_string(z.shape()));
    }
  }
  for (auto len : lengths) {
    if (len < 1 || len > sequence.size()) {
      throw std::invalid_argument("recurrent aggregate: per-sample length must lie in [1, sequence length]");
    }
  }

  Tensor h({B, H}), c({B, H});
  std::vector<Real> keep(B), hold(B);
  for (std::size_t s = 0; s < sequence.size(); ++s) {
    Tensor gates = ops::affine(sequence[s], w_input, bias);
    if (s > 0) gates = ops::add(gates, ops::affine(h, w_hidden, Tensor()));
    const Tensor in_gate = ops::sigmoid(ops::slice(gates, 1, 0, H));
    const Tensor forget = ops::sigmoid(ops::slice(gates, 1, H, H));
    const Tensor candidate = ops::tanh(ops::slice(gates, 1, 2 * H, H));
    const Tensor out_gate = ops::sigmoid(ops::slice(gates, 1, 3 * H, H));
    Tensor c_next = ops::mul(in_gate, candidate);
    if (s > 0) c_next = ops::add(ops::mul(forget, c), c_next);
    Tensor h_next = ops::mul(out_gate, ops::tanh(c_next));

    bool all_active = true;
    for (std::size_t b = 0; b < B; ++b) {
      keep[b] = s < lengths[b] ? Real(1) : Real(0);
      hold[b] = Real(1) - keep[b];
      all_active = all_active && keep[b] == Real(1);
    }
    if (all_active) {
      h = h_next;
      c = c_next;
    } else {
      h = ops::add(ops::scale_rows(h_next, keep), ops::scale_rows(h, hold));
      c = ops::add(ops::scale_rows(c_next, keep), ops::scale_rows(c, hold));
    }
  }
  return h;
}

void RecurrentAggregator::collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_input", w_input});
  out.push_back({prefix + ".w_hidden", w_hidden});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace layers
PTSC_END_NAMESPACE
