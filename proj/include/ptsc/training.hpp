// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ptsc/checkpoint.hpp"
#include "ptsc/data.hpp"
#include "ptsc/models.hpp"

PTSC_BEGIN_NAMESPACE
namespace training {

/// w_c = total / (classes * count_c); every class must occur.
std::vector<double> class_weights(std::span<const int> labels, std::size_t classes);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled: after the Adam update, p -= lr * weight_decay * p.
  double weight_decay = 0.0;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(std::span<Real> param, std::span<const Real> grad, AdamMoments& moments, double lr,
               const AdamConfig& config);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<layers::NamedTensor> params, AdamConfig config);

  void zero_grad();
  /// Parameters that received no gradient are treated as having zero gradient.
  void step(double lr);

  /// Moments as checkpoint entries named adam.m.<param>, adam.v.<param>.
  std::vector<NamedArray> state() const;
  void load_state(std::span<const NamedArray> entries);

 private:
  std::vector<layers::NamedTensor> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig config_;
};

enum class LrSchedule {
  /// Multiply by `plateau_factor` after `plateau_patience` epochs without a
  /// new best validation loss, never below `min_lr`.
  plateau,
  /// Multiply by `step_factor` once, after epoch `step_epoch`.
  step,
};

enum class Monitor { val_loss, val_auroc };

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double min_lr = 1e-4;
  LrSchedule schedule = LrSchedule::plateau;
  std::size_t plateau_patience = 50;
  double plateau_factor = 0.5;
  std::size_t step_epoch = 0;
  double step_factor = 0.1;
  std::size_t early_stop_patience = 100;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  /// Selects the retained best checkpoint and drives early stopping.
  Monitor monitor = Monitor::val_loss;
  std::size_t crop_ramp_end = 800;
  double crop_start = 1.0;
  double crop_end = 0.1;

  void validate() const;
};

/// "archive": 1000 epochs, batch 16, lr 1e-3 halved on 50-epoch plateaus
/// down to 1e-4, early stop after 100, 10% validation monitored by loss,
/// crop ramp 1.0 -> 0.1 over 800 epochs.
/// "trajectory": 100 epochs, 20% validation monitored by AUROC, one 10x
/// learning-rate step at epoch 75, crop ramp 1.0 -> 0.1 over 80 epochs.
std::vector<std::string> train_preset_names();
TrainConfig train_preset(std::string_view name);

/// JSON object with the TrainConfig field names; missing fields keep the
/// values of `base`.
TrainConfig parse_train_config(std::string_view json_text, const TrainConfig& base = {});
std::string train_config_json(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auroc = 0;  // NaN unless monitored
  double lr = 0;
  double crop_ratio = 1;
};

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

/// Mean over three views (complete, first half, latter half) of the weighted
/// cross-entropy of each view, computed in eval mode.
double validation_loss(const models::Model& model, std::span<const data::SeriesRecord> records,
                       std::span<const double> class_weights, std::size_t batch_size = 64);

struct Split {
  std::vector<data::SeriesRecord> train;
  std::vector<data::SeriesRecord> validation;
};

/// Stratified: round(fraction * count_c) records of each class (at least one
/// when fraction > 0) go to validation, chosen by a generator seeded with `seed`.
Split split_validation(std::span<const data::SeriesRecord> records, double fraction, std::uint64_t seed);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<NamedArray> best_state;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  bool stopped_early = false;
};

/// Raised when a training loss is not finite. Carries the model state of the
/// failing step for inspection.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& message, std::vector<NamedArray> state)
      : std::runtime_error(message), state_(std::move(state)) {}
  const std::vector<NamedArray>& state() const { return state_; }

 private:
  std::vector<NamedArray> state_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` in place on normalised records; the model ends in its last
/// state and the best one is returned. A single thread owns the model.
TrainResult train(models::Model& model, std::span<const data::SeriesRecord> records, std::size_t classes,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace training
PTSC_END_NAMESPACE
