#include "procgcn/optim.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace procgcn {

namespace {
constexpr double kAdamEps = 1e-8;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

Optimizer::Optimizer(const OptimizerSpec& spec, std::vector<Param*> params)
    : spec_(spec), params_(std::move(params)), lr_(spec.lr) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->size(), 0.0);
    v_[i].assign(params_[i]->size(), 0.0);
  }
}

void Optimizer::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      double g = p.grad[k] + spec_.weight_decay * p.value[k];
      switch (spec_.kind) {
        case OptimizerKind::adam: {
          m[k] = spec_.beta1 * m[k] + (1.0 - spec_.beta1) * g;
          v[k] = spec_.beta2 * v[k] + (1.0 - spec_.beta2) * g * g;
          const double mhat = m[k] / (1.0 - std::pow(spec_.beta1, static_cast<double>(t_)));
          const double vhat = v[k] / (1.0 - std::pow(spec_.beta2, static_cast<double>(t_)));
          p.value[k] -= lr_ * mhat / (std::sqrt(vhat) + kAdamEps);
          break;
        }
        case OptimizerKind::sgd: {
          if (spec_.momentum > 0.0) {
            m[k] = spec_.momentum * m[k] + g;
            g = m[k];
          }
          p.value[k] -= lr_ * g;
          break;
        }
        case OptimizerKind::rmsprop: {
          v[k] = spec_.alpha * v[k] + (1.0 - spec_.alpha) * g * g;
          const double upd = g / (std::sqrt(v[k]) + spec_.eps);
          if (spec_.momentum > 0.0) {
            m[k] = spec_.momentum * m[k] + upd;
            p.value[k] -= lr_ * m[k];
          } else {
            p.value[k] -= lr_ * upd;
          }
          break;
        }
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

// --- schedulers ------------------------------------------------------------------

Scheduler::Scheduler(const SchedulerSpec& spec, double base_lr, long batches_per_epoch)
    : spec_(spec), base_lr_(base_lr), current_(base_lr) {
  if (spec_.kind == SchedulerKind::one_cycle) {
    total_steps_ = batches_per_epoch * 1000;
    current_ = lr_at(0);
  } else if (spec_.kind == SchedulerKind::cyclic) {
    current_ = lr_at(0);
  }
}

double Scheduler::lr_at(long counter) const {
  const double e = static_cast<double>(counter);
  switch (spec_.kind) {
    case SchedulerKind::step:
      return base_lr_ * std::pow(spec_.gamma, static_cast<double>(counter / spec_.step_size));
    case SchedulerKind::exponential:
      return base_lr_ * std::pow(spec_.gamma, e);
    case SchedulerKind::plateau:
      return current_;
    case SchedulerKind::polynomial: {
      const double t = static_cast<double>(spec_.total_iters);
      const double frac = 1.0 - std::min(e, t) / t;
      return base_lr_ * std::pow(frac, spec_.power);
    }
    case SchedulerKind::cosine:
      return spec_.eta_min + (base_lr_ - spec_.eta_min) *
                                 (1.0 + std::cos(kPi * e / static_cast<double>(spec_.t_max))) / 2.0;
    case SchedulerKind::cyclic: {
      // triangular cycle between base_lr and max_lr
      const double up = static_cast<double>(spec_.step_size_up);
      const double cycle = std::floor(1.0 + e / (2.0 * up));
      const double x = std::abs(e / up - 2.0 * cycle + 1.0);
      return spec_.base_lr + (spec_.max_lr - spec_.base_lr) * std::max(0.0, 1.0 - x);
    }
    case SchedulerKind::one_cycle: {
      // linear warm-up from max/25 to max, then cosine decay to the
      // max/25 * 1e-4 floor
      const double start = spec_.max_lr / 25.0;
      const double floor = start * 1e-4;
      const double warm = spec_.pct_start * static_cast<double>(total_steps_);
      if (e <= warm) return start + (spec_.max_lr - start) * (warm > 0.0 ? e / warm : 1.0);
      if (counter >= total_steps_) return floor;
      const double frac = (e - warm) / (static_cast<double>(total_steps_) - warm);
      return floor + (spec_.max_lr - floor) * (1.0 + std::cos(kPi * frac)) / 2.0;
    }
  }
  return base_lr_;
}

double Scheduler::observe(double metric) {
  if (spec_.kind != SchedulerKind::plateau) return current_;
  if (!has_best_ || metric < best_ - spec_.threshold) {
    best_ = metric;
    has_best_ = true;
    bad_count_ = 0;
    return current_;
  }
  if (++bad_count_ >= spec_.patience) {
    const double next = current_ * spec_.factor;
    if (current_ - next > spec_.eps) current_ = next;
    bad_count_ = 0;
  }
  return current_;
}

ad::Tensor l1_penalty(ad::Tape& tape, std::span<Param* const> params, double lambda) {
  ad::Tensor total;
  for (Param* p : params) {
    if (p->kind != ParamKind::weight || p->size() == 0) continue;
    ad::Tensor term = ad::sum(ad::abs_op(tape.use(*p)));
    total = total.defined() ? ad::add(total, term) : term;
  }
  if (!total.defined()) return tape.zeros(1, 1);
  return ad::scale(total, lambda);
}

// --- spec serialization -------------------------------------------------------

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::step: return "step";
    case SchedulerKind::exponential: return "exponential";
    case SchedulerKind::plateau: return "plateau";
    case SchedulerKind::polynomial: return "polynomial";
    case SchedulerKind::cosine: return "cosine";
    case SchedulerKind::cyclic: return "cyclic";
    case SchedulerKind::one_cycle: return "one_cycle";
  }
  return "?";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer: " + s);
}

SchedulerKind scheduler_kind_from_string(const std::string& s) {
  if (s == "step") return SchedulerKind::step;
  if (s == "exponential") return SchedulerKind::exponential;
  if (s == "plateau") return SchedulerKind::plateau;
  if (s == "polynomial") return SchedulerKind::polynomial;
  if (s == "cosine") return SchedulerKind::cosine;
  if (s == "cyclic") return SchedulerKind::cyclic;
  if (s == "one_cycle") return SchedulerKind::one_cycle;
  throw ConfigError("unknown scheduler: " + s);
}

nlohmann::json OptimizerSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = procgcn::to_string(kind);
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  switch (kind) {
    case OptimizerKind::adam:
      j["beta1"] = beta1;
      j["beta2"] = beta2;
      break;
    case OptimizerKind::sgd:
      j["momentum"] = momentum;
      break;
    case OptimizerKind::rmsprop:
      j["alpha"] = alpha;
      j["momentum"] = momentum;
      j["eps"] = eps;
      break;
  }
  return j;
}

OptimizerSpec OptimizerSpec::from_json(const nlohmann::json& j) {
  OptimizerSpec s;
  s.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
  s.lr = j.at("lr").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.beta1 = j.value("beta1", s.beta1);
  s.beta2 = j.value("beta2", s.beta2);
  s.momentum = j.value("momentum", s.momentum);
  s.alpha = j.value("alpha", s.alpha);
  s.eps = j.value("eps", s.eps);
  return s;
}

nlohmann::json SchedulerSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = procgcn::to_string(kind);
  switch (kind) {
    case SchedulerKind::step:
      j["step_size"] = step_size;
      j["gamma"] = gamma;
      break;
    case SchedulerKind::exponential:
      j["gamma"] = gamma;
      break;
    case SchedulerKind::plateau:
      j["factor"] = factor;
      j["patience"] = patience;
      j["threshold"] = threshold;
      j["eps"] = eps;
      break;
    case SchedulerKind::polynomial:
      j["power"] = power;
      j["total_iters"] = total_iters;
      break;
    case SchedulerKind::cosine:
      j["t_max"] = t_max;
      j["eta_min"] = eta_min;
      break;
    case SchedulerKind::cyclic:
      j["base_lr"] = base_lr;
      j["max_lr"] = max_lr;
      j["step_size_up"] = step_size_up;
      break;
    case SchedulerKind::one_cycle:
      j["max_lr"] = max_lr;
      j["pct_start"] = pct_start;
      break;
  }
  return j;
}

SchedulerSpec SchedulerSpec::from_json(const nlohmann::json& j) {
  SchedulerSpec s;
  s.kind = scheduler_kind_from_string(j.at("kind").get<std::string>());
  s.step_size = j.value("step_size", s.step_size);
  s.gamma = j.value("gamma", s.gamma);
  s.factor = j.value("factor", s.factor);
  s.patience = j.value("patience", s.patience);
  s.threshold = j.value("threshold", s.threshold);
  s.eps = j.value("eps", s.eps);
  s.power = j.value("power", s.power);
  s.total_iters = j.value("total_iters", s.total_iters);
  s.t_max = j.value("t_max", s.t_max);
  s.eta_min = j.value("eta_min", s.eta_min);
  s.base_lr = j.value("base_lr", s.base_lr);
  s.max_lr = j.value("max_lr", s.max_lr);
  s.step_size_up = j.value("step_size_up", s.step_size_up);
  s.pct_start = j.value("pct_start", s.pct_start);
  return s;
}

}  // namespace procgcn
