// SPDX-License-Identifier: Apache-2.0
#include "ptsc/models.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

PTSC_BEGIN_NAMESPACE
namespace models {

using nlohmann::json;

std::string_view to_string(LengthPolicy p) {
  return p == LengthPolicy::fixed_interpolate ? "fixed_interpolate" : "variable_masked";
}

LengthPolicy parse_length_policy(std::string_view name) {
  if (name == "fixed_interpolate") return LengthPolicy::fixed_interpolate;
  if (name == "variable_masked") return LengthPolicy::variable_masked;
  throw std::invalid_argument("unknown length policy '" + std::string(name) +
                              "' (expected fixed_interpolate or variable_masked)");
}

void ModelConfig::validate() const {
  if (input_channels == 0) throw std::invalid_argument("model config: input_channels must be set");
  if (classes < 2) throw std::invalid_argument("model config: need at least 2 classes");
  if (blocks.empty()) throw std::invalid_argument("model config: backbone needs at least one block");
  if (te.enabled) {
    if (length_policy == LengthPolicy::fixed_interpolate) {
      throw std::invalid_argument(
          "model config: temporal encoding cannot be combined with fixed_interpolate "
          "(resampling discards the timestamps the encoding reads)");
    }
    if (t_max == 0) throw std::invalid_argument("model config: temporal encoding needs t_max");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string where = "model config: block " + std::to_string(i);
    if (b.kernels.empty()) throw std::invalid_argument(where + " has no kernels");
    if (b.channels == 0) throw std::invalid_argument(where + " has zero channels");
    for (auto k : b.kernels) {
      if (k == 0) throw std::invalid_argument(where + " has a zero kernel");
      if (b.residual && k % 2 == 0) throw std::invalid_argument(where + " is residual and needs odd kernels");
    }
    if ((b.pool_window == 0) != (b.pool_stride == 0)) {
      throw std::invalid_argument(where + ": pool_window and pool_stride must both be 0 or both positive");
    }
  }
  if (head.variant != heads::HeadVariant::gap && head.projection_channels == 0) {
    throw std::invalid_argument("model config: head projection_channels must be positive");
  }
  if (head.variant == heads::HeadVariant::adaptive_multi_scale && head.hidden_size == 0) {
    throw std::invalid_argument("model config: head hidden_size must be positive");
  }
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

layers::BlockConfig block_from_json(const json& j, std::size_t index) {
  const std::string where = "block " + std::to_string(index);
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  reject_unknown(j, {"kernels", "channels", "pool_window", "pool_stride", "residual"}, where);
  layers::BlockConfig b;
  const auto& k = j.at("kernels");
  if (k.is_array()) {
    b.kernels = k.get<std::vector<std::size_t>>();
  } else {
    b.kernels = {k.get<std::size_t>()};
  }
  b.channels = j.at("channels").get<std::size_t>();
  b.pool_window = get_or<std::size_t>(j, "pool_window", 0);
  b.pool_stride = get_or<std::size_t>(j, "pool_stride", b.pool_window);
  b.residual = get_or<bool>(j, "residual", false);
  return b;
}

}  // namespace

ModelConfig parse_model_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  try {
    reject_unknown(j,
                   {"name", "input_channels", "classes", "t_max", "length_policy", "blocks", "temporal_encoding",
                    "head", "classifier_hidden"},
                   "model config");
    ModelConfig c;
    c.name = get_or<std::string>(j, "name", "");
    c.input_channels = get_or<std::size_t>(j, "input_channels", 0);
    c.classes = get_or<std::size_t>(j, "classes", 0);
    c.t_max = get_or<std::size_t>(j, "t_max", 0);
    c.length_policy = parse_length_policy(get_or<std::string>(j, "length_policy", "variable_masked"));
    const auto& blocks = j.at("blocks");
    if (!blocks.is_array()) throw std::invalid_argument("model config: blocks must be an array");
    for (std::size_t i = 0; i < blocks.size(); ++i) c.blocks.push_back(block_from_json(blocks[i], i));
    if (j.contains("temporal_encoding") && !j.at("temporal_encoding").is_null()) {
      const auto& t = j.at("temporal_encoding");
      if (t.is_boolean()) {
        c.te.enabled = t.get<bool>();
      } else {
        reject_unknown(t, {"enabled", "channels", "cyclic"}, "temporal_encoding");
        c.te.enabled = get_or<bool>(t, "enabled", true);
        c.te.channels = get_or<std::size_t>(t, "channels", 0);
        c.te.cyclic = get_or<bool>(t, "cyclic", false);
      }
    }
    if (j.contains("head")) {
      const auto& h = j.at("head");
      reject_unknown(h, {"variant", "projection_channels", "include_input_level", "hidden_size"}, "head");
      c.head.variant = heads::parse_head_variant(get_or<std::string>(h, "variant", "adaptive_multi_scale"));
      c.head.projection_channels = get_or<std::size_t>(h, "projection_channels", 64);
      c.head.include_input_level = get_or<bool>(h, "include_input_level", true);
      c.head.hidden_size = get_or<std::size_t>(h, "hidden_size", 64);
    }
    c.classifier_hidden = get_or<std::size_t>(j, "classifier_hidden", 64);
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
}

std::string model_config_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks) {
    blocks.push_back({{"kernels", b.kernels},
                      {"channels", b.channels},
                      {"pool_window", b.pool_window},
                      {"pool_stride", b.pool_stride},
                      {"residual", b.residual}});
  }
  json j = {
      {"name", c.name},
      {"input_channels", c.input_channels},
      {"classes", c.classes},
      {"t_max", c.t_max},
      {"length_policy", std::string(to_string(c.length_policy))},
      {"blocks", blocks},
      {"temporal_encoding", {{"enabled", c.te.enabled}, {"channels", c.te.channels}, {"cyclic", c.te.cyclic}}},
      {"head",
       {{"variant", std::string(heads::to_string(c.head.variant))},
        {"projection_channels", c.head.projection_channels},
        {"include_input_level", c.head.include_input_level},
        {"hidden_size", c.head.hidden_size}}},
      {"classifier_hidden", c.classifier_hidden},
  };
  return j.dump(2) + "\n";
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

std::vector<std::string> preset_names() {
  return {"basecnn", "basecnn-te", "mscnn",  "mscnn-te",  "ascnn",        "ascnn-te",    "amscnn",
          "amscnn-te", "basecnn-intp", "resnet", "resnet-vl", "resnet-te", "amsresnet", "amsresnet-te"};
}

namespace {

std::vector<layers::BlockConfig> base_stack() {
  const std::size_t kernels[] = {7, 5, 5, 3, 3, 3};
  const std::size_t channels[] = {32, 32, 64, 64, 64, 64};
  const std::size_t pools[] = {2, 4, 2, 4, 2, 4};
  std::vector<layers::BlockConfig> out;
  for (int i = 0; i < 6; ++i) out.push_back({{kernels[i]}, channels[i], pools[i], pools[i], false});
  return out;
}

std::vector<layers::BlockConfig> residual_stack() {
  const std::size_t channels[] = {64, 128, 128};
  std::vector<layers::BlockConfig> out;
  for (auto c : channels) out.push_back({{9, 5, 3}, c, 0, 0, true});
  return out;
}

}  // namespace

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  std::string_view base = name;
  if (base.ends_with("-te")) {
    c.te.enabled = true;
    base.remove_suffix(3);
  }
  using heads::HeadVariant;
  if (base == "basecnn" || base == "mscnn" || base == "ascnn" || base == "amscnn" || base == "basecnn-intp") {
    if (base == "basecnn-intp" && c.te.enabled) throw std::invalid_argument("unknown preset '" + c.name + "'");
    c.blocks = base_stack();
    c.classifier_hidden = 64;
    c.head.variant = base == "mscnn"    ? HeadVariant::multi_scale
                     : base == "ascnn"  ? HeadVariant::adaptive_scale
                     : base == "amscnn" ? HeadVariant::adaptive_multi_scale
                                        : HeadVariant::gap;
    if (base == "basecnn-intp") c.length_policy = LengthPolicy::fixed_interpolate;
    return c;
  }
  if (base == "resnet" || base == "resnet-vl" || base == "amsresnet") {
    if (base == "resnet-vl" && c.te.enabled) throw std::invalid_argument("unknown preset '" + c.name + "'");
    c.blocks = residual_stack();
    c.classifier_hidden = 0;
    c.head.variant = base == "amsresnet" ? HeadVariant::adaptive_multi_scale : HeadVariant::gap;
    if (base == "resnet" && !c.te.enabled) c.length_policy = LengthPolicy::fixed_interpolate;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + c.name + "'");
}

RfReport rf_report(const ModelConfig& config) {
  RfReport r;
  for (std::size_t b = 0; b < config.blocks.size(); ++b) {
    const auto& blk = config.blocks[b];
    const std::string prefix = "block" + std::to_string(b);
    for (std::size_t i = 0; i < blk.kernels.size(); ++i) {
      const auto k = static_cast<std::int64_t>(blk.kernels[i]);
      r.layers.push_back({k, 1, (k - 1) / 2});
      r.layer_names.push_back(prefix + ".conv" + std::to_string(i));
    }
    if (blk.pool_window > 0) {
      r.layers.push_back({static_cast<std::int64_t>(blk.pool_window), static_cast<std::int64_t>(blk.pool_stride), 0});
      r.layer_names.push_back(prefix + ".pool");
    }
    r.block_last.push_back(r.layers.size() - 1);
  }
  r.entries = rf::rf_of_stack(r.layers);
  for (auto i : r.block_last) {
    r.block_rfs.push_back(r.entries[i].rf);
    r.block_jumps.push_back(r.entries[i].jump);
  }
  if (!r.entries.empty()) {
    r.final_rf = r.entries.back().rf;
    r.cumulative_stride = r.entries.back().jump;
  }
  return r;
}

std::string format_rf_report(const RfReport& r, const ModelConfig& config) {
  std::ostringstream out;
  out << "model: " << (config.name.empty() ? "(unnamed)" : config.name) << "\n";
  out << "layer            kernel stride padding      rf   jump  offset\n";
  char line[128];
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    std::snprintf(line, sizeof line, "%-16s %6lld %6lld %7lld %7lld %6lld %7lld\n", r.layer_names[i].c_str(),
                  static_cast<long long>(r.layers[i].kernel), static_cast<long long>(r.layers[i].stride),
                  static_cast<long long>(r.layers[i].padding), static_cast<long long>(r.entries[i].rf),
                  static_cast<long long>(r.entries[i].jump), static_cast<long long>(r.entries[i].left_offset));
    out << line;
  }
  out << "block RFs: [";
  for (std::size_t i = 0; i < r.block_rfs.size(); ++i) out << (i ? ", " : "") << r.block_rfs[i];
  out << "]\nfinal RF: " << r.final_rf << "\ncumulative stride: " << r.cumulative_stride << "\n";
  return out.str();
}

std::string rf_report_json(const RfReport& r, const ModelConfig& config) {
  json layers_j = json::array();
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    layers_j.push_back({{"name", r.layer_names[i]},
                        {"kernel", r.layers[i].kernel},
                        {"stride", r.layers[i].stride},
                        {"padding", r.layers[i].padding},
                        {"rf", r.entries[i].rf},
                        {"jump", r.entries[i].jump},
                        {"left_offset", r.entries[i].left_offset}});
  }
  json j = {{"model", config.name},       {"layers", layers_j},
            {"block_rfs", r.block_rfs},   {"block_jumps", r.block_jumps},
            {"final_rf", r.final_rf},     {"cumulative_stride", r.cumulative_stride}};
  return j.dump(2) + "\n";
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  m.rf_ = rf_report(config);
  layers::Rng rng(seed);
  std::size_t channels = config.input_channels;
  if (config.te.enabled) {
    const std::size_t ce = config.te.channels ? config.te.channels : config.input_channels;
    m.te_ = te::TemporalEncoding::create(ce, config.t_max, config.te.cyclic, rng);
    channels += ce;
  }
  std::vector<std::size_t> level_channels{channels};
  for (const auto& b : config.blocks) {
    m.blocks_.emplace_back(channels, b, rng);
    channels = b.channels;
    level_channels.push_back(channels);
  }
  m.head_ = heads::Head(config.head, level_channels, rng);
  const std::size_t features = m.head_.output_size();
  if (config.classifier_hidden > 0) {
    m.classifier_.emplace_back(features, config.classifier_hidden, rng);
    m.classifier_.emplace_back(config.classifier_hidden, config.classes, rng);
  } else {
    m.classifier_.emplace_back(features, config.classes, rng);
  }
  return m;
}

ForwardTrace Model::trace(const Tensor& x, std::span<const rf::ValidInterval> valid_in, layers::Mode mode) const {
  if (x.rank() != 3) throw std::invalid_argument("model: input must be [B, D, T], got " + shape_string(x.shape()));
  const std::size_t B = x.dim(0), T = x.dim(2);
  if (x.dim(1) != config_.input_channels) {
    throw std::invalid_argument("model: expected " + std::to_string(config_.input_channels) +
                                " input channels, got " + std::to_string(x.dim(1)));
  }
  std::vector<rf::ValidInterval> valid;
  if (config_.length_policy == LengthPolicy::fixed_interpolate) {
    valid.assign(B, {0, static_cast<std::int64_t>(T)});
  } else {
    if (valid_in.size() != B) throw std::invalid_argument("model: need one valid interval per sample");
    for (const auto& v : valid_in) {
      if (v.empty() || v.start < 0 || v.end > static_cast<std::int64_t>(T)) {
        throw std::invalid_argument("model: valid interval " + rf::to_string(v) + " must be non-empty and inside [0, " +
                                    std::to_string(T) + ")");
      }
    }
    valid.assign(valid_in.begin(), valid_in.end());
  }
  std::vector<std::int64_t> lengths;
  for (const auto& v : valid) lengths.push_back(v.length());

  ForwardTrace out;
  out.levels.push_back({te_ ? te::apply_te(*te_, x, valid) : x, valid});
  for (const auto& block : blocks_) out.levels.push_back(block.forward(out.levels.back(), mode));
  out.features = head_.forward(out.levels, rf_.block_rfs, lengths);

  Tensor h = out.features;
  for (std::size_t i = 0; i < classifier_.size(); ++i) {
    h = classifier_[i].forward(h);
    if (i + 1 < classifier_.size()) h = ops::relu(h);
  }
  auto& p = out.prediction;
  p.logits = h;
  p.probabilities = ops::softmax_rows(h);
  const std::size_t N = h.dim(1);
  const auto z = h.data();
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = z.subspan(b * N, N);
    p.predicted.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

PredictionOutput Model::forward(const Tensor& x, std::span<const rf::ValidInterval> valid, layers::Mode mode) const {
  return trace(x, valid, mode).prediction;
}

std::vector<layers::NamedTensor> Model::parameters() const {
  std::vector<layers::NamedTensor> out;
  if (te_) out.push_back({"te.table", te_->table});
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect_parameters("block" + std::to_string(i), out);
  head_.collect_parameters("head", out);
  for (std::size_t i = 0; i < classifier_.size(); ++i) {
    classifier_[i].collect_parameters("classifier.fc" + std::to_string(i), out);
  }
  return out;
}

std::vector<layers::NamedTensor> Model::buffers() const {
  std::vector<layers::NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect_buffers("block" + std::to_string(i), out);
  return out;
}

std::vector<NamedArray> Model::state() const {
  std::vector<NamedArray> out;
  for (const auto& p : parameters()) out.push_back(to_named_array(p.name, p.value));
  for (const auto& b : buffers()) out.push_back(to_named_array(b.name, b.value));
  return out;
}

void Model::load_state(std::span<const NamedArray> entries) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto targets = parameters();
  for (auto& b : buffers()) targets.push_back(b);
  for (auto& t : targets) {
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks entry '" + t.name + "'");
    if (it->second->shape != t.value.shape()) {
      throw CheckpointError("checkpoint entry '" + t.name + "' has shape " + shape_string(it->second->shape) +
                            ", model expects " + shape_string(t.value.shape()));
    }
    auto dst = t.value.mutable_data();
    std::transform(it->second->values.begin(), it->second->values.end(), dst.begin(),
                   [](double v) { return static_cast<Real>(v); });
  }
}

}  // namespace models
PTSC_END_NAMESPACE
