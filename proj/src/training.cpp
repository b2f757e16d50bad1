#include "crossvae/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <optional>
#include <exception>
#include <thread>

namespace crossvae {

namespace {

struct ItemResult {
  LossBreakdown loss;
  double latent_gap = 0.0;
};

struct Sample {
  Tensor<float> x_t, x_b;
};

std::vector<Sample> to_samples(const Dataset& data, const ModelConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const auto& it : data.items) {
    if (it.trajectory.length() != cfg.seq_len) {
      throw std::invalid_argument("dataset trajectory length " +
                                  std::to_string(it.trajectory.length()) +
                                  " does not match model sequence length " +
                                  std::to_string(cfg.seq_len));
    }
    out.push_back({to_tensor<float>(it.trajectory), to_tensor<float>(it.bitmap)});
  }
  return out;
}

void check_finite(const LossBreakdown& b, int epoch, std::size_t batch) {
  const auto terms = b.terms();
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!std::isfinite(terms[i])) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch) + ": term " + LossBreakdown::kNames[i]);
    }
  }
}

/// Evaluates `items` (positions into the epoch order) on up to `threads`
/// workers. Per-item gradients are folded into `total` strictly in item
/// order, so the result is independent of the thread count.
void run_items(const CrossVae<float>& model, const ParamStore<float>& params,
               const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
               std::size_t begin, std::size_t end, const TrainConfig& cfg, int epoch,
               int threads, GradBuffer<float>* total, std::vector<ItemResult>& results) {
  const std::size_t n = end - begin;
  results.assign(n, {});
  const auto eval_one = [&](std::size_t k, GradBuffer<float>* scratch) {
    const std::size_t pos = begin + k;
    const Sample& s = samples[order[pos]];
    Rng rng = Rng::stream(cfg.seed, "noise",
                          {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(pos)});
    const auto eps_t = sample_noise<float>(model.latent_dim(), rng);
    const auto eps_b = sample_noise<float>(model.latent_dim(), rng);
    ItemResult r;
    if (scratch) {
      scratch->set_zero();
      CrossOutputs<float> o;
      r.loss = model.loss_and_grad(s.x_t, s.x_b, params, cfg.weights, eps_t, eps_b, *scratch, &o);
      r.latent_gap = static_cast<double>((o.z_t.values - o.z_b.values).norm());
    } else {
      auto o = model.forward_cross(s.x_t, s.x_b, params, eps_t, eps_b);
      r.loss = model.total_loss(o, s.x_t, s.x_b, cfg.weights);
      r.latent_gap = static_cast<double>((o.z_t.values - o.z_b.values).norm());
    }
    return r;
  };

  const int workers = static_cast<int>(std::min<std::size_t>(std::max(threads, 1), n));
  if (workers <= 1) {
    std::optional<GradBuffer<float>> scratch;
    if (total) scratch.emplace(params);
    for (std::size_t k = 0; k < n; ++k) {
      results[k] = eval_one(k, scratch ? &*scratch : nullptr);
      if (total) {
        for (std::size_t s = 0; s < total->size(); ++s) (*total)[s] += (*scratch)[s];
      }
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;
  std::size_t reduced = 0;
  std::exception_ptr failure;
  const auto worker = [&] {
    std::optional<GradBuffer<float>> scratch;
    if (total) scratch.emplace(params);
    for (std::size_t k = next++; k < n; k = next++) {
      ItemResult r;
      try {
        r = eval_one(k, scratch ? &*scratch : nullptr);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return reduced == k; });
      results[k] = r;
      if (total && !failure) {
        for (std::size_t s = 0; s < total->size(); ++s) (*total)[s] += (*scratch)[s];
      }
      ++reduced;
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CROSSVAE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.model == b.model) || a.epoch != b.epoch || a.train.epochs != b.train.epochs ||
      a.train.batch_size != b.train.batch_size || !(a.train.weights == b.train.weights) ||
      !(a.train.rmsprop == b.train.rmsprop) || a.train.seed != b.train.seed ||
      !(a.optimizer == b.optimizer) || a.params.size() != b.params.size()) {
    return false;
  }
  for (std::size_t s = 0; s < a.params.size(); ++s) {
    if (a.params.entry(s).name != b.params.entry(s).name ||
        !(a.params.entry(s).value == b.params.entry(s).value)) {
      return false;
    }
  }
  return true;
}

Checkpoint init_training(const ModelConfig& model, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint c;
  c.model = model;
  c.train = cfg;
  CrossVae<float> vae(model);
  Rng rng = Rng::stream(cfg.seed, "init");
  c.params = vae.make_initialized_params(rng);
  c.optimizer = RmspropState<float>::for_params(c.params, cfg.rmsprop);
  c.epoch = 0;
  return c;
}

std::vector<EpochStats> continue_training(Checkpoint& state, const Dataset& data, int until_epoch,
                                          const EpochCallback& on_epoch) {
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  state.train.validate();
  const CrossVae<float> model(state.model);
  const auto samples = to_samples(data, state.model);
  const int threads = resolve_threads(state.train.threads);
  const auto batch = static_cast<std::size_t>(state.train.batch_size);

  std::vector<EpochStats> history;
  GradBuffer<float> total(state.params);
  std::vector<ItemResult> results;
  while (state.epoch < until_epoch) {
    const int epoch = state.epoch + 1;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::stream(state.train.seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
    shuffle.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t begin = 0, b = 0; begin < order.size(); begin += batch, ++b) {
      const std::size_t end = std::min(order.size(), begin + batch);
      total.set_zero();
      try {
        run_items(model, state.params, samples, order, begin, end, state.train, epoch, threads,
                  &total, results);
      } catch (const NumericError& e) {
        throw TrainingError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ": " + e.what());
      }
      LossBreakdown batch_loss;
      for (const auto& r : results) {
        batch_loss += r.loss;
        stats.mean_latent_gap += r.latent_gap;
      }
      check_finite(batch_loss, epoch, b);
      stats.loss += batch_loss;
      state.params.zero_grad();
      total.add_into(state.params);
      rmsprop_step(state.params, state.optimizer);
    }
    const double n = static_cast<double>(samples.size());
    stats.loss = stats.loss.scaled(1.0 / n);
    stats.mean_latent_gap /= n;
    state.epoch = epoch;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats, state);
  }
  return history;
}

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  TrainResult r{init_training(model, cfg), {}};
  r.history = continue_training(r.state, data, cfg.epochs, on_epoch);
  return r;
}

EpochStats evaluate_loss(const Checkpoint& state, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("evaluate_loss: dataset is empty");
  const CrossVae<float> model(state.model);
  const auto samples = to_samples(data, state.model);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<ItemResult> results;
  run_items(model, state.params, samples, order, 0, order.size(), state.train, state.epoch,
            resolve_threads(state.train.threads), nullptr, results);
  EpochStats stats;
  stats.epoch = state.epoch;
  for (const auto& r : results) {
    stats.loss += r.loss;
    stats.mean_latent_gap += r.latent_gap;
  }
  const double n = static_cast<double>(samples.size());
  stats.loss = stats.loss.scaled(1.0 / n);
  stats.mean_latent_gap /= n;
  return stats;
}

}  // namespace crossvae
