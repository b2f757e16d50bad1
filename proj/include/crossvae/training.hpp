#pragma once

#include "crossvae/model.hpp"
#include "crossvae/rmsprop.hpp"
#include "crossvae/stroke_data.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossvae {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  LossWeights weights;
  RmspropConfig rmsprop;
  std::uint64_t seed = 0;
  /// Worker threads for per-item evaluation; 0 reads CROSSVAE_THREADS, then
  /// falls back to the hardware concurrency. Results do not depend on it.
  int threads = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    weights.validate();
  }
};

/// Everything needed to continue training bit-exactly: the random streams
/// are derived from (seed, epoch, position), so the epoch counter is the
/// complete generator state.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig model;
  TrainConfig train;
  ParamStore<float> params;
  RmspropState<float> optimizer;
  int epoch = 0;
};

bool operator==(const Checkpoint& a, const Checkpoint& b);

struct EpochStats {
  int epoch = 0;
  /// Per-item mean of each weighted term over the epoch's batches.
  LossBreakdown loss;
  /// Mean ||z_t - z_b|| of the sampled codes over the epoch.
  double mean_latent_gap = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochStats&, const Checkpoint&)>;

/// Fresh state at epoch 0 with initialized parameters.
Checkpoint init_training(const ModelConfig& model, const TrainConfig& cfg);

/// Runs epochs (state.epoch, until_epoch]; returns their stats.
std::vector<EpochStats> continue_training(Checkpoint& state, const Dataset& data, int until_epoch,
                                          const EpochCallback& on_epoch = {});

struct TrainResult {
  Checkpoint state;
  std::vector<EpochStats> history;
};

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean per-item loss over a whole dataset at fixed parameters, using the
/// noise stream of `epoch`.
EpochStats evaluate_loss(const Checkpoint& state, const Dataset& data);

int resolve_threads(int requested);

}  // namespace crossvae
