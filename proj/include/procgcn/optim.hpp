#pragma once

#include <span>
#include <vector>

#include "procgcn/autodiff.hpp"
#include "procgcn/optim_spec.hpp"

namespace procgcn {

/// Adam / SGD / RMSprop over a fixed parameter list. Weight decay is the
/// coupled (L2) form: grad += wd * value before the kernel update. Adam keeps
/// bias correction with a fixed eps of 1e-8.
class Optimizer {
 public:
  Optimizer(const OptimizerSpec& spec, std::vector<Param*> params);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  /// Applies one update from each Param's current grad.
  void step();

  void zero_grad();

 private:
  OptimizerSpec spec_;
  std::vector<Param*> params_;
  double lr_ = 0.0;
  long t_ = 0;  // adam step counter
  std::vector<std::vector<double>> m_, v_;  // adam moments / rmsprop sq + momentum
};

/// Learning-rate schedules. The closed-form kinds are pure functions of an
/// epoch or batch counter (counters start at 0); plateau is stateful and
/// driven by the observed validation loss.
class Scheduler {
 public:
  Scheduler(const SchedulerSpec& spec, double base_lr, long batches_per_epoch);

  /// Cyclic and one-cycle schedules advance per optimizer step, the rest per
  /// epoch.
  bool per_batch() const {
    return spec_.kind == SchedulerKind::cyclic || spec_.kind == SchedulerKind::one_cycle;
  }
  bool needs_metric() const { return spec_.kind == SchedulerKind::plateau; }

  /// Closed-form learning rate at a counter value. Plateau returns its
  /// current (state-dependent) rate.
  double lr_at(long counter) const;

  /// Plateau only: report a validation loss; the rate decays by `factor`
  /// after `patience` consecutive non-improving observations.
  double observe(double metric);

  double current_lr() const { return current_; }

 private:
  SchedulerSpec spec_;
  double base_lr_;
  long total_steps_ = 0;  // one_cycle
  // plateau state
  double best_ = 0.0;
  bool has_best_ = false;
  int bad_count_ = 0;
  double current_;
};

/// L1 penalty over weight matrices only (biases and batch-norm parameters are
/// exempt), built on the tape so its subgradient reaches backward.
ad::Tensor l1_penalty(ad::Tape& tape, std::span<Param* const> params, double lambda);

}  // namespace procgcn
