// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <sstream>

#include "ptsc/data.hpp"
#include "ptsc/models.hpp"
#include "ptsc/training.hpp"

namespace ptsc::testing {

/// Normalised synthetic data on a shorter timeline, sized for quick training.
inline data::Dataset quick_dataset(std::size_t count, std::uint64_t seed) {
  data::SyntheticConfig cfg;
  cfg.t_max = 300;
  cfg.min_length = 60;
  cfg.max_length = 300;
  auto ds = data::generate_synthetic(cfg, count, seed, "quick");
  const auto norm = data::fit_minmax(ds.records, cfg.channels);
  data::apply_minmax(ds.records, norm);
  return ds;
}

inline models::ModelConfig quick_model(bool te) {
  models::ModelConfig c;
  c.name = "quick";
  c.input_channels = 5;
  c.classes = 2;
  c.t_max = 300;
  c.blocks = {{{7}, 6, 2, 2, false}, {{5}, 8, 4, 4, false}, {{3}, 8, 2, 2, false}};
  c.te = {te, 3, false};
  c.head = {heads::HeadVariant::adaptive_multi_scale, 6, true, 6};
  c.classifier_hidden = 6;
  return c;
}

inline training::TrainConfig quick_training(std::size_t epochs, std::uint64_t seed) {
  auto tc = training::train_preset("trajectory");
  tc.epochs = epochs;
  tc.seed = seed;
  tc.crop_ramp_end = epochs;
  return tc;
}

struct TrainingRun {
  std::vector<training::EpochRecord> history;
  std::string best_bytes;
  std::string last_bytes;
};

inline std::string checkpoint_bytes(std::span<const NamedArray> state) {
  std::ostringstream ss;
  write_checkpoint(ss, state);
  return ss.str();
}

inline TrainingRun quick_training_run(std::size_t epochs, std::uint64_t seed, std::size_t count = 96) {
  const auto ds = quick_dataset(count, seed + 100);
  auto model = models::build_model(quick_model(true), seed);
  const auto result = training::train(model, ds.records, 2, quick_training(epochs, seed));
  return {result.history, checkpoint_bytes(result.best_state), checkpoint_bytes(model.state())};
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

/// Empty when both runs agree bit for bit.
inline std::string compare_runs(const TrainingRun& a, const TrainingRun& b) {
  if (a.history.size() != b.history.size()) return "history lengths differ";
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const auto &x = a.history[i], &y = b.history[i];
    if (!same_bits(x.train_loss, y.train_loss) || !same_bits(x.val_loss, y.val_loss) ||
        !same_bits(x.val_auroc, y.val_auroc) || !same_bits(x.lr, y.lr) || !same_bits(x.crop_ratio, y.crop_ratio)) {
      return "history differs at epoch " + std::to_string(i);
    }
  }
  if (a.best_bytes != b.best_bytes) return "best checkpoints differ";
  if (a.last_bytes != b.last_bytes) return "last checkpoints differ";
  return {};
}

}  // namespace ptsc::testing
