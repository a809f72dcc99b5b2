// SPDX-License-Identifier: Apache-2.0
#include "ptsc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "ptsc/evaluation.hpp"

PTSC_BEGIN_NAMESPACE
namespace training {

std::vector<double> class_weights(std::span<const int> labels, std::size_t classes) {
  if (classes == 0) throw std::invalid_argument("class_weights: need at least one class");
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw std::invalid_argument("class_weights: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    ++counts[static_cast<std::size_t>(l)];
  }
  std::vector<double> w(classes);
  const double total = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw std::invalid_argument("class_weights: class " + std::to_string(c) + " has no samples");
    w[c] = total / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return w;
}

void adam_step(std::span<Real> param, std::span<const Real> grad, AdamMoments& mom, double lr, const AdamConfig& cfg) {
  if (!grad.empty() && grad.size() != param.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  ++mom.step;
  const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(mom.step));
  const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(mom.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    mom.m[i] = cfg.beta1 * mom.m[i] + (1 - cfg.beta1) * g;
    mom.v[i] = cfg.beta2 * mom.v[i] + (1 - cfg.beta2) * g * g;
    const double update = lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + cfg.epsilon);
    double p = static_cast<double>(param[i]) - update;
    if (cfg.weight_decay != 0) p -= lr * cfg.weight_decay * static_cast<double>(param[i]);
    param[i] = static_cast<Real>(p);
  }
}

Adam::Adam(std::vector<layers::NamedTensor> params, AdamConfig config)
    : params_(std::move(params)), moments_(params_.size()), config_(config) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void Adam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].value;
    adam_step(p.mutable_data(), p.has_grad() ? p.grad() : std::span<const Real>{}, moments_[i], lr, config_);
  }
}

std::vector<NamedArray> Adam::state() const {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& shape = params_[i].value.shape();
    const std::size_t n = shape_numel(shape);
    const auto& m = moments_[i];
    out.push_back({"adam.m." + params_[i].name, shape, m.m.empty() ? std::vector<double>(n, 0.0) : m.m});
    out.push_back({"adam.v." + params_[i].name, shape, m.v.empty() ? std::vector<double>(n, 0.0) : m.v});
    out.push_back({"adam.step." + params_[i].name, {1}, {static_cast<double>(m.step)}});
  }
  return out;
}

void Adam::load_state(std::span<const NamedArray> entries) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = params_[i].name;
    const auto m = by_name.find("adam.m." + name), v = by_name.find("adam.v." + name),
               s = by_name.find("adam.step." + name);
    if (m == by_name.end() || v == by_name.end() || s == by_name.end()) {
      throw CheckpointError("optimizer state lacks moments for '" + name + "'");
    }
    moments_[i].m = m->second->values;
    moments_[i].v = v->second->values;
    moments_[i].step = static_cast<std::uint64_t>(s->second->values.at(0));
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("training: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("training: batch size must be positive");
  if (!(lr > 0)) throw std::invalid_argument("training: learning rate must be positive");
  if (min_lr > lr) throw std::invalid_argument("training: minimum learning rate exceeds the initial one");
  if (!(plateau_factor > 0 && plateau_factor < 1)) throw std::invalid_argument("training: plateau factor must lie in (0, 1)");
  if (!(step_factor > 0 && step_factor < 1)) throw std::invalid_argument("training: step factor must lie in (0, 1)");
  if (schedule == LrSchedule::plateau && plateau_patience == 0) {
    throw std::invalid_argument("training: plateau patience must be positive");
  }
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw std::invalid_argument("training: validation fraction must lie in (0, 1)");
  }
  if (!(crop_end > 0 && crop_end <= 1 && crop_start > 0 && crop_start <= 1)) {
    throw std::invalid_argument("training: crop ratios must lie in (0, 1]");
  }
  if (weight_decay < 0) throw std::invalid_argument("training: weight decay must be >= 0");
}

std::vector<std::string> train_preset_names() { return {"archive", "trajectory"}; }

TrainConfig train_preset(std::string_view name) {
  TrainConfig c;
  if (name == "archive") return c;
  if (name == "trajectory") {
    c.epochs = 100;
    c.batch_size = 16;
    c.lr = 1e-3;
    c.min_lr = 1e-5;
    c.schedule = LrSchedule::step;
    c.step_epoch = 75;
    c.step_factor = 0.1;
    c.early_stop_patience = 100;
    c.validation_fraction = 0.2;
    c.monitor = Monitor::val_auroc;
    c.crop_ramp_end = 80;
    return c;
  }
  throw std::invalid_argument("unknown training preset '" + std::string(name) + "' (expected archive or trajectory)");
}

namespace {

using nlohmann::json;

const char* schedule_name(LrSchedule s) { return s == LrSchedule::plateau ? "plateau" : "step"; }
const char* monitor_name(Monitor m) { return m == Monitor::val_loss ? "val_loss" : "val_auroc"; }

}  // namespace

TrainConfig parse_train_config(std::string_view json_text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("training config must be a JSON object");
  TrainConfig c = base;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "min_lr") c.min_lr = v.get<double>();
      else if (k == "schedule") {
        const auto s = v.get<std::string>();
        if (s == "plateau") c.schedule = LrSchedule::plateau;
        else if (s == "step") c.schedule = LrSchedule::step;
        else throw std::invalid_argument("training config: schedule must be plateau or step");
      } else if (k == "plateau_patience") c.plateau_patience = v.get<std::size_t>();
      else if (k == "plateau_factor") c.plateau_factor = v.get<double>();
      else if (k == "step_epoch") c.step_epoch = v.get<std::size_t>();
      else if (k == "step_factor") c.step_factor = v.get<double>();
      else if (k == "early_stop_patience") c.early_stop_patience = v.get<std::size_t>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "validation_fraction") c.validation_fraction = v.get<double>();
      else if (k == "monitor") {
        const auto s = v.get<std::string>();
        if (s == "val_loss") c.monitor = Monitor::val_loss;
        else if (s == "val_auroc") c.monitor = Monitor::val_auroc;
        else throw std::invalid_argument("training config: monitor must be val_loss or val_auroc");
      } else if (k == "crop_ramp_end") c.crop_ramp_end = v.get<std::size_t>();
      else if (k == "crop_start") c.crop_start = v.get<double>();
      else if (k == "crop_end") c.crop_end = v.get<double>();
      else throw std::invalid_argument("training config: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("training config: ") + e.what());
  }
  return c;
}

std::string train_config_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"min_lr", c.min_lr},
            {"schedule", schedule_name(c.schedule)},
            {"plateau_patience", c.plateau_patience},
            {"plateau_factor", c.plateau_factor},
            {"step_epoch", c.step_epoch},
            {"step_factor", c.step_factor},
            {"early_stop_patience", c.early_stop_patience},
            {"weight_decay", c.weight_decay},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"monitor", monitor_name(c.monitor)},
            {"crop_ramp_end", c.crop_ramp_end},
            {"crop_start", c.crop_start},
            {"crop_end", c.crop_end}};
  return j.dump(2) + "\n";
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,lr,crop_ratio,val_auroc\n";
  const auto old = out.precision(17);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << h.lr << ',' << h.crop_ratio << ',';
    if (!std::isnan(h.val_auroc)) out << h.val_auroc;
    out << '\n';
  }
  out.precision(old);
}

namespace {

/// Sum of w_b * CE_b and of w_b over one view.
std::pair<double, double> weighted_ce(const evaluation::Predictions& p, std::span<const double> class_weights) {
  double loss = 0, wsum = 0;
  const std::size_t N = p.classes;
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    const double* z = p.logits.data() + i * N;
    const double m = *std::max_element(z, z + N);
    double s = 0;
    for (std::size_t k = 0; k < N; ++k) s += std::exp(z[k] - m);
    const double ce = m + std::log(s) - z[p.labels[i]];
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(p.labels[i])];
    loss += w * ce;
    wsum += w;
  }
  return {loss, wsum};
}

struct ValidationResult {
  double loss = 0;
  double auroc = std::numeric_limits<double>::quiet_NaN();
};

ValidationResult validate_views(const models::Model& model, std::span<const data::SeriesRecord> records,
                                std::span<const double> class_weights, std::size_t batch_size, bool want_auroc) {
  if (records.empty()) throw std::invalid_argument("validation_loss: empty validation set");
  std::vector<data::SeriesRecord> first, latter;
  for (const auto& r : records) {
    auto [a, b] = data::half_crops(r);
    first.push_back(std::move(a));
    latter.push_back(std::move(b));
  }
  ValidationResult out;
  double total = 0;
  for (auto view : {records, std::span<const data::SeriesRecord>(first), std::span<const data::SeriesRecord>(latter)}) {
    const auto p = evaluation::predict(model, view, batch_size, 1);
    const auto [loss, wsum] = weighted_ce(p, class_weights);
    total += loss / wsum;
    if (want_auroc && view.data() == records.data()) {
      try {
        out.auroc = evaluation::auroc_multiclass(p.probabilities, p.labels, p.classes);
      } catch (const std::invalid_argument&) {
        out.auroc = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  out.loss = total / 3;
  return out;
}

}  // namespace

double validation_loss(const models::Model& model, std::span<const data::SeriesRecord> records,
                       std::span<const double> class_weights, std::size_t batch_size) {
  return validate_views(model, records, class_weights, batch_size, false).loss;
}

Split split_validation(std::span<const data::SeriesRecord> records, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<bool> held(records.size(), false);
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (fraction > 0) take = std::max<std::size_t>(take, 1);
    take = std::min(take, idx.size());
    for (std::size_t k = 0; k < take; ++k) held[idx[k]] = true;
  }
  Split s;
  for (std::size_t i = 0; i < records.size(); ++i) (held[i] ? s.validation : s.train).push_back(records[i]);
  return s;
}

TrainResult train(models::Model& model, std::span<const data::SeriesRecord> records, std::size_t classes,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (records.empty()) throw std::invalid_argument("train: no training records");
  // Separate streams keep the split independent of how many crops are drawn.
  auto split = split_validation(records, cfg.validation_fraction, cfg.seed ^ 0x5eed5eedULL);
  if (split.train.empty()) throw std::invalid_argument("train: validation split left no training records");
  std::vector<int> labels;
  for (const auto& r : split.train) labels.push_back(r.label);
  const auto weights = class_weights(labels, classes);

  std::mt19937_64 rng(cfg.seed);
  Adam adam(model.parameters(), AdamConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainResult result;
  const bool by_auroc = cfg.monitor == Monitor::val_auroc;
  double best = by_auroc ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  double best_loss_for_plateau = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, since_loss_best = 0;
  double lr = cfg.lr;

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<data::SeriesRecord> chunk;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double ratio = data::crop_schedule(epoch, cfg.crop_ramp_end, cfg.crop_start, cfg.crop_end);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0, weight_sum = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      chunk.clear();
      for (std::size_t k = lo; k < hi; ++k) chunk.push_back(data::random_crop(split.train[order[k]], ratio, rng));
      const auto batch = evaluation::prepare_batch(model, chunk, weights);
      adam.zero_grad();
      const auto pred = model.forward(batch.x, batch.valid, layers::Mode::train);
      const Tensor loss = ops::softmax_cross_entropy(pred.logits, batch.labels, batch.weights);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingAborted("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                  std::to_string(lo),
                              model.state());
      }
      loss.backward();
      adam.step(lr);
      double wb = 0;
      for (auto w : batch.weights) wb += static_cast<double>(w);
      loss_sum += value * wb;
      weight_sum += wb;
    }

    const auto val = validate_views(model, split.validation, weights, 64, by_auroc);
    if (!std::isfinite(val.loss)) {
      throw TrainingAborted("non-finite validation loss at epoch " + std::to_string(epoch), model.state());
    }
    EpochRecord rec{epoch, loss_sum / weight_sum, val.loss, val.auroc, lr, ratio};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double metric = by_auroc ? val.auroc : val.loss;
    const bool improved = by_auroc ? metric > best : metric < best;
    if (improved || result.best_state.empty()) {
      if (improved) best = metric;
      result.best_state = model.state();
      result.best_epoch = epoch;
      result.best_metric = metric;
      since_best = 0;
    } else {
      ++since_best;
    }

    if (val.loss < best_loss_for_plateau) {
      best_loss_for_plateau = val.loss;
      since_loss_best = 0;
    } else {
      ++since_loss_best;
    }
    if (cfg.schedule == LrSchedule::plateau) {
      if (since_loss_best >= cfg.plateau_patience) {
        lr = std::max(cfg.min_lr, lr * cfg.plateau_factor);
        since_loss_best = 0;
      }
    } else if (epoch + 1 == cfg.step_epoch) {
      lr = std::max(cfg.min_lr, lr * cfg.step_factor);
    }
    if (since_best >= cfg.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace training
PTSC_END_NAMESPACE
