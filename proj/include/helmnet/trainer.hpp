#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "helmnet/datagen.hpp"
#include "helmnet/neural/adam.hpp"
#include "helmnet/neural/network.hpp"

namespace helmnet::train {

struct TrainConfig {
  std::vector<Index> sizes{64, 128};
  std::vector<Index> samples_per_epoch{800, 200};
  Index epochs_per_size_block = 20;
  Index max_epochs = 250;
  double lr = 1e-3;
  Index lr_decay_epochs = 100;
  Index batch_size = 16;
  /// Distinct slowness models per batch; the encoder runs once per model.
  Index models_per_batch = 4;
  double val_fraction = 0.1;
  /// Validation samples per size (0: 10% of samples_per_epoch, at least one batch).
  Index val_samples = 0;
  /// Stop after this many epochs without validation improvement (0: never).
  Index patience = 0;
  std::uint64_t seed = 0;
  /// Directory for per-block checkpoints; empty disables them.
  std::string checkpoint_dir;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
};

/// Flat "key = value" text (comma-separated lists, '#' comments).
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& cfg);

struct EpochRecord {
  Index epoch = 0;
  Index size = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double final_lr = 0.0;
  Index epochs_run = 0;
};

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history);

/// Learning rate at a global epoch: lr / 10^(epoch / lr_decay_epochs).
double scheduled_lr(const TrainConfig& cfg, Index epoch);

/// Model tensor (1, 2, n, n) with the kappa^2 and gamma planes.
nn::Tensor<float> model_planes(const SlownessModel<double>& m);

/// A fixed set of samples with their network-space tensors.
struct SampleBatchSet {
  std::vector<Index> model_of;  // per sample
  std::vector<nn::Tensor<float>> inputs, targets;
};

SampleBatchSet to_network_space(const nn::HelmNet<float>& net, const std::vector<data::SamplePair>& pairs);

/// Mean per-sample MSE of the network (inference mode) over a sample set.
double evaluate_mse(const nn::HelmNet<float>& net, const std::vector<SlownessModel<double>>& models,
                    const SampleBatchSet& set, Index batch_size);

/// Called at the end of each epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Multiscale training. corpora[i] holds the models of size cfg.sizes[i]
/// (prepared with the training attenuation); the last val_fraction of each
/// corpus is held out for validation.
TrainResult train(nn::HelmNet<float>& net, const TrainConfig& cfg,
                  const std::vector<std::vector<SlownessModel<double>>>& corpora,
                  const EpochCallback& on_epoch = {});

struct RetrainOptions {
  Index pairs = 300;
  Index epochs = 30;
  double lr = 1e-4;
  Index batch_size = 16;
  std::uint64_t seed = 0;
};

/// Fine-tunes a copy of `net` on pairs generated from a single model (given at
/// the reduced training resolution, with training attenuation).
nn::HelmNet<float> retrain_ood(const nn::HelmNet<float>& net, const SlownessModel<double>& model,
                               const RetrainOptions& opt, std::vector<EpochRecord>* history = nullptr);

}  // namespace helmnet::train
