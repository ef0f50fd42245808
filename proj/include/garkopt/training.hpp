#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "garkopt/core.hpp"
#include "garkopt/datasets.hpp"
#include "garkopt/errors.hpp"
#include "garkopt/nn.hpp"
#include "garkopt/optimizers.hpp"

namespace garkopt {

struct TrainConfig {
  Method method = make_method("adam");
  LrSchedule schedule = LrSchedule::constant(1e-3);
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = kDefaultEpsilon;
  std::size_t epochs = 0;
  std::size_t batches = 1;
  std::uint64_t seed = 0;  // drives the per-epoch batch shuffles
  LossKind loss = LossKind::mse;
  bool shuffle = true;
};

struct TrajectoryPoint {
  std::size_t epoch = 0;
  std::size_t grad_evals = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Raised by train_loop; keeps the trajectory recorded before the failure.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(std::size_t step, std::size_t epoch, std::size_t grad_evals, double lr,
                   const std::string& cause, Trajectory partial)
      : DivergenceError("diverged at step " + std::to_string(step) + " (epoch " +
                        std::to_string(epoch) + "): " + cause),
        step_(step), epoch_(epoch), grad_evals_(grad_evals), lr_(lr), partial_(std::move(partial)) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t grad_evals() const noexcept { return grad_evals_; }
  double lr() const noexcept { return lr_; }
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  std::size_t step_;
  std::size_t epoch_;
  std::size_t grad_evals_;
  double lr_;
  Trajectory partial_;
};

/// splitmix64 finalizer; decorrelates per-epoch shuffle seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Epochs x batches, one optimizer step per batch. Every stage gradient of a
/// step uses that step's batch. The loss on the full training set (and the
/// test set, if given) is recorded at epoch 0 and after every epoch.
inline Trajectory train_loop(const TrainConfig& cfg, Mlp& model, const Batch& train,
                             const Batch* test = nullptr) {
  cfg.schedule.validate();
  const Batch* current = &train;
  LossOracle oracle([&](double, std::span<const double> theta) {
    return loss_and_gradient(model, theta, *current, cfg.loss);
  });

  auto record = [&](std::size_t epoch, const OptimizerState& s, double lr) {
    TrajectoryPoint p{epoch, s.grad_evals, lr, batch_loss(model, s.theta, train, cfg.loss), {}};
    if (test) p.test_loss = batch_loss(model, s.theta, *test, cfg.loss);
    return p;
  };

  Trajectory traj;
  OptimizerState state;
  try {
    state = init_state(model.parameters(), oracle, 0.0);
  } catch (const DivergenceError& e) {
    throw TrainingDiverged(0, 0, oracle.evaluations(), schedule_lr(cfg.schedule, 0), e.what(), traj);
  }
  traj.push_back(record(0, state, schedule_lr(cfg.schedule, 0)));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = schedule_lr(cfg.schedule, epoch);
    const HyperParams hp{lr, cfg.beta1, cfg.beta2, cfg.epsilon};
    const auto parts = make_batches(train, cfg.batches, mix_seed(cfg.seed, epoch), cfg.shuffle);
    try {
      for (const Batch& b : parts) {
        current = &b;
        state = apply_step(cfg.method, state, oracle, hp);
      }
      current = &train;
      TrajectoryPoint p = record(epoch + 1, state, lr);
      if (!std::isfinite(p.train_loss)) throw DivergenceError("non-finite training loss");
      traj.push_back(p);
    } catch (const DivergenceError& e) {
      model.set_parameters(state.theta);
      throw TrainingDiverged(state.step + 1, epoch + 1, oracle.evaluations(), lr, e.what(), traj);
    }
  }
  model.set_parameters(state.theta);
  return traj;
}

}  // namespace garkopt
