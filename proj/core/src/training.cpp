#include "gengap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"
#include "gengap/metrics.hpp"
#include "gengap/numerics.hpp"
#include "gengap/rng.hpp"

namespace gengap {

std::string objective_name(const Objective& objective) {
  struct Visitor {
    std::string operator()(const StandardObjective&) const { return "standard"; }
    std::string operator()(const ConsistObjective&) const { return "consist"; }
    std::string operator()(const SamObjective&) const { return "sam"; }
    std::string operator()(const ConsistFlatObjective&) const {
      return "consist_flat";
    }
    std::string operator()(const SemiConsistObjective&) const {
      return "semi_consist";
    }
    std::string operator()(const DistillObjective&) const { return "distill"; }
  };
  return std::visit(Visitor{}, objective);
}

bool is_paired(const Objective& objective) {
  return std::holds_alternative<ConsistObjective>(objective) ||
         std::holds_alternative<ConsistFlatObjective>(objective) ||
         std::holds_alternative<SemiConsistObjective>(objective);
}

void ProcedureSpec::validate() const {
  model.validate();
  if (epochs.has_value() == update_steps.has_value()) {
    throw ConfigError(fmt::format(
        "procedure '{}': set exactly one of epochs and update_steps", name));
  }
  if ((epochs && *epochs == 0) || (update_steps && *update_steps == 0)) {
    throw ConfigError(fmt::format("procedure '{}': training length is zero", name));
  }
  if (batch_size == 0) {
    throw ConfigError(fmt::format("procedure '{}': batch_size is zero", name));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError(fmt::format("procedure '{}': momentum must be in [0,1)", name));
  }
  if (!(schedule.base_lr >= 0.0)) {
    throw ConfigError(fmt::format("procedure '{}': base_lr must be >= 0", name));
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError(
        fmt::format("procedure '{}': label_smoothing must be in [0,1)", name));
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError(fmt::format("procedure '{}': weight_decay must be >= 0", name));
  }
  if (grad_clip && !(*grad_clip > 0.0)) {
    throw ConfigError(fmt::format("procedure '{}': grad_clip must be > 0", name));
  }
  if (ema_momentum && !(*ema_momentum >= 0.0 && *ema_momentum < 1.0)) {
    throw ConfigError(
        fmt::format("procedure '{}': ema momentum must be in [0,1)", name));
  }
  if (augment.kind != AugmentKind::kNone && !(augment.magnitude >= 0.0)) {
    throw ConfigError(
        fmt::format("procedure '{}': augmentation magnitude must be >= 0", name));
  }
  auto check_beta = [&](double beta) {
    if (!(beta >= 0.0)) {
      throw ConfigError(fmt::format("procedure '{}': beta must be >= 0", name));
    }
  };
  auto check_rho = [&](double rho) {
    if (!(rho >= 0.0)) {
      throw ConfigError(fmt::format("procedure '{}': rho must be >= 0", name));
    }
  };
  if (auto* o = std::get_if<ConsistObjective>(&objective)) check_beta(o->beta);
  if (auto* o = std::get_if<SamObjective>(&objective)) check_rho(o->rho);
  if (auto* o = std::get_if<ConsistFlatObjective>(&objective)) {
    check_beta(o->beta);
    check_rho(o->rho);
  }
  if (auto* o = std::get_if<SemiConsistObjective>(&objective)) {
    check_beta(o->beta);
    if (!(o->confidence_threshold >= 0.0 && o->confidence_threshold <= 1.0)) {
      throw ConfigError(fmt::format(
          "procedure '{}': confidence threshold must be in [0,1]", name));
    }
    if (!(o->ema_momentum >= 0.0 && o->ema_momentum < 1.0)) {
      throw ConfigError(
          fmt::format("procedure '{}': teacher EMA momentum must be in [0,1)", name));
    }
  }
  if (auto* o = std::get_if<DistillObjective>(&objective)) {
    check_beta(o->beta_kl);
    if (o->teacher.empty()) {
      throw ConfigError(fmt::format("procedure '{}': distill needs a teacher", name));
    }
  }
}

double lr_at(const Schedule& schedule, std::size_t step,
             std::size_t total_steps) {
  if (total_steps == 0 || step > total_steps) {
    throw DomainError(
        fmt::format("lr_at: step {} outside [0, {}]", step, total_steps));
  }
  const double base = schedule.base_lr;
  if (step < schedule.warmup_steps) {
    return base * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);
  }
  if (schedule.kind == ScheduleKind::kConstant) return base;
  const auto decay_steps = total_steps > schedule.warmup_steps
                               ? total_steps - schedule.warmup_steps
                               : std::size_t{1};
  const double progress =
      std::min(1.0, static_cast<double>(step - schedule.warmup_steps) /
                        static_cast<double>(decay_steps));
  const double end = schedule.end_fraction;
  if (schedule.kind == ScheduleKind::kCosine) {
    return base *
           (end + (1.0 - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
  }
  return base * (1.0 - (1.0 - end) * progress);
}

void sgd_step(ParamVector& params, const ParamVector& grads, SgdState& state,
              double lr, double weight_decay, std::optional<double> grad_clip,
              std::size_t step) {
  require_same_layout(params, grads, "sgd_step");
  if (!grads.all_finite()) {
    throw DivergenceError(
        fmt::format("non-finite gradient at step {}", step), step);
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), 0.0);
  }
  double scale = 1.0;
  if (grad_clip) {
    const double norm = grads.norm2();
    if (norm > *grad_clip) scale = *grad_clip / norm;
  }
  const double shrink = 1.0 - lr * weight_decay;
  const double mu = state.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = scale * grads[i];
    auto& v = state.velocity[i];
    v = mu * v - lr * g;
    params[i] = params[i] * shrink + mu * v - lr * g;
  }
}

ParamVector ema_update(const ParamVector& avg, const ParamVector& current,
                       double momentum) {
  ParamVector out = avg;
  ema_update_inplace(out, current, momentum);
  return out;
}

void ema_update_inplace(ParamVector& avg, const ParamVector& current,
                        double momentum) {
  require_same_layout(avg, current, "ema_update");
  if (momentum == 1.0) return;
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg[i] = momentum * avg[i] + (1.0 - momentum) * current[i];
  }
}

SamResult sam_gradient_detailed(const RangeLossFn& loss, std::size_t batch_size,
                                const ParamVector& at, double rho,
                                std::size_t m) {
  if (!(rho >= 0.0)) throw DomainError("sam: rho must be >= 0");
  if (batch_size == 0) throw DomainError("sam: empty batch");
  if (m == 0 || m > batch_size) m = batch_size;
  SamResult result;
  if (rho == 0.0) {
    auto [value, grad] = value_and_gradient(
        [&](ad::Tape& t, ad::Var th) { return loss(t, th, 0, batch_size); }, at);
    result.gradient = std::move(grad);
    result.loss = value;
    return result;
  }
  result.gradient = at.zeros_like();
  const std::size_t micro = (batch_size + m - 1) / m;
  for (std::size_t b = 0; b < micro; ++b) {
    const auto begin = b * m;
    const auto end = std::min(batch_size, begin + m);
    auto fn = [&](ad::Tape& t, ad::Var th) { return loss(t, th, begin, end); };
    auto [value, g] = value_and_gradient(fn, at);
    result.loss += value;
    const double norm = g.norm2();
    if (norm < 1e-12) {
      result.perturbation_norms.push_back(0.0);
      for (std::size_t i = 0; i < g.size(); ++i) result.gradient[i] += g[i];
      continue;
    }
    ParamVector perturbed = at;
    double eps_sq = 0.0;
    for (std::size_t i = 0; i < at.size(); ++i) {
      const double e = rho * g[i] / norm;
      perturbed[i] += e;
      eps_sq += e * e;
    }
    result.perturbation_norms.push_back(std::sqrt(eps_sq));
    ParamVector gp;
    try {
      gp = gradient(fn, perturbed);
    } catch (const NumericInputError&) {
      throw NumericInputError("sam: non-finite loss at the perturbed point");
    }
    for (std::size_t i = 0; i < gp.size(); ++i) result.gradient[i] += gp[i];
  }
  const double inv = 1.0 / static_cast<double>(micro);
  for (auto& v : result.gradient.values()) v *= inv;
  result.loss *= inv;
  return result;
}

ParamVector sam_gradient(const RangeLossFn& loss, std::size_t batch_size,
                         const ParamVector& at, double rho, std::size_t m) {
  return sam_gradient_detailed(loss, batch_size, at, rho, m).gradient;
}

double masked_consistency_penalty(const Tensor& teacher_probs,
                                  const Tensor& student_logits, double beta,
                                  double threshold) {
  if (teacher_probs.shape() != student_logits.shape()) {
    throw ShapeError("masked_consistency_penalty: shape mismatch");
  }
  const auto n = teacher_probs.rows();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto t = teacher_probs.row(r);
    if (!(*std::max_element(t.begin(), t.end()) > threshold)) continue;
    const auto lsm = log_softmax(student_logits.row(r));
    double kl = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) {
      if (t[c] > 0.0) kl += t[c] * (std::log(t[c]) - lsm[c]);
    }
    total += kl;
  }
  return beta * total / static_cast<double>(n);
}

std::uint64_t partner_seed(std::uint64_t seed, std::size_t member) {
  return derive_seed(seed, member == 0 ? SeedRole::kPartnerA
                                       : SeedRole::kPartnerB);
}

std::size_t total_steps(const ProcedureSpec& proc, std::size_t train_size) {
  if (proc.update_steps) return *proc.update_steps;
  const auto per_epoch = (train_size + proc.batch_size - 1) / proc.batch_size;
  return proc.epochs.value_or(1) * per_epoch;
}

namespace {

// Iterates a dataset in shuffled, augmented mini-batches. A fresh
// permutation and fresh augmentation noise are drawn at each epoch start.
class BatchCursor {
 public:
  BatchCursor(const Tensor& features, const std::vector<std::size_t>* labels,
              std::size_t batch_size, std::uint64_t data_seed,
              std::uint64_t augment_seed, Augmentation augment)
      : features_(features),
        labels_(labels),
        batch_size_(std::min(batch_size, features.rows())),
        order_(features.rows()),
        data_stream_(data_seed),
        augment_stream_(augment_seed),
        augment_(augment) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  struct Batch {
    Tensor x;
    std::vector<std::size_t> y;
  };

  Batch next() {
    if (cursor_ == 0) start_epoch();
    const auto n = order_.size();
    const auto end = std::min(n, cursor_ + batch_size_);
    const auto d = features_.cols();
    Batch b;
    b.x = Tensor({end - cursor_, d});
    std::copy(epoch_x_.data().begin() + cursor_ * d,
              epoch_x_.data().begin() + end * d, b.x.data().begin());
    if (labels_) {
      for (auto i = cursor_; i < end; ++i) b.y.push_back((*labels_)[order_[i]]);
    }
    cursor_ = end == n ? 0 : end;
    return b;
  }

  bool at_epoch_boundary() const { return cursor_ == 0; }

 private:
  void start_epoch() {
    data_stream_.shuffle(std::span<std::size_t>(order_));
    epoch_x_ = features_.gather_rows(order_);
    switch (augment_.kind) {
      case AugmentKind::kNone:
        break;
      case AugmentKind::kGaussianNoise:
        for (auto& v : epoch_x_.data()) {
          v += augment_.magnitude * augment_stream_.normal();
        }
        break;
      case AugmentKind::kShift:
        for (auto& v : epoch_x_.data()) {
          v += augment_stream_.uniform(-augment_.magnitude, augment_.magnitude);
        }
        break;
    }
  }

  const Tensor& features_;
  const std::vector<std::size_t>* labels_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  Tensor epoch_x_;
  std::size_t cursor_ = 0;
  RandomStream data_stream_;
  RandomStream augment_stream_;
  Augmentation augment_;
};

Tensor rows_range(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto d = x.cols();
  Tensor out({end - begin, d});
  std::copy(x.data().begin() + begin * d, x.data().begin() + end * d,
            out.data().begin());
  return out;
}

// CE over rows [begin, end) plus beta * mean KL(target || f) on those rows.
RangeLossFn supervised_loss(const ModelSpec& spec, const Tensor& x,
                            const std::vector<std::size_t>& y, double smoothing,
                            const Tensor* target, double beta) {
  return [&spec, &x, &y, smoothing, target, beta](
             ad::Tape& tape, ad::Var theta, std::size_t begin,
             std::size_t end) {
    const bool whole = begin == 0 && end == x.rows();
    const Tensor xs = whole ? x : rows_range(x, begin, end);
    auto logits = forward_logits(tape, spec, theta, xs);
    std::span<const std::size_t> labels(y.data() + begin, end - begin);
    auto loss = ad::softmax_cross_entropy(logits, labels, smoothing);
    if (target != nullptr && beta != 0.0) {
      const Tensor ts = whole ? *target : rows_range(*target, begin, end);
      std::vector<double> w(end - begin,
                            beta / static_cast<double>(end - begin));
      loss = ad::add(loss, ad::softmax_kl_from_target(ts, logits, w));
    }
    return loss;
  };
}

// One model being trained: parameters, optimizer state, optional iterate
// average and its private data stream.
struct Member {
  Model model;
  SgdState sgd;
  std::optional<ParamVector> ema;
  BatchCursor cursor;
  std::vector<EpochStats> curve;
  std::uint64_t seed;

  const ParamVector& reported() const { return ema ? *ema : model.params; }
};

Member make_member(const ProcedureSpec& proc, const LabeledSet& train,
                   std::uint64_t seed) {
  ParamVector params;
  if (proc.init_from) {
    Model init = load_checkpoint(*proc.init_from);
    if (!(init.spec == proc.model)) {
      throw ShapeError(fmt::format(
          "init_from checkpoint {} does not match the procedure's model",
          *proc.init_from));
    }
    params = std::move(init.params);
  } else {
    params = init_params(proc.model, seed);
  }
  Member m{Model{proc.model, params, Lineage{proc.name, 0, 0, 0}},
           SgdState{proc.momentum, {}},
           std::nullopt,
           BatchCursor(train.features, &train.labels, proc.batch_size,
                       derive_seed(seed, SeedRole::kData),
                       derive_seed(seed, SeedRole::kAugment), proc.augment),
           {},
           seed};
  if (proc.ema_momentum) m.ema = params;
  return m;
}

void check_training_inputs(const ProcedureSpec& proc, const LabeledSet& train) {
  proc.validate();
  if (train.empty()) throw DomainError("training set is empty");
  if (train.dims() != proc.model.input_dim) {
    throw ShapeError("training features do not match the model input_dim");
  }
  for (auto y : train.labels) {
    if (y >= proc.model.num_classes) throw DomainError("label out of range");
  }
}

void record_epoch(Member& m, const LabeledSet& train, std::size_t epoch,
                  std::size_t step) {
  Model view{m.model.spec, m.reported(), {}};
  const auto le = eval_loss_error(view, train);
  m.curve.push_back(EpochStats{epoch, step, le.loss, le.error});
}

// Applies one optimizer update to `m` and records the epoch boundary.
void apply_update(Member& m, const ProcedureSpec& proc, const LabeledSet& train,
                  const ParamVector& grad, double lr, std::size_t step,
                  std::size_t total) {
  sgd_step(m.model.params, grad, m.sgd, lr, proc.weight_decay, proc.grad_clip,
           step);
  if (!m.model.params.all_finite()) {
    throw DivergenceError(
        fmt::format("parameters became non-finite at step {}", step), step);
  }
  if (m.ema) ema_update_inplace(*m.ema, m.model.params, *proc.ema_momentum);
  const bool boundary = m.cursor.at_epoch_boundary();
  if (boundary || step + 1 == total) {
    record_epoch(m, train, m.curve.size() + 1, step + 1);
  }
}

template <typename F>
auto guard_step(std::size_t step, F&& f) {
  try {
    return f();
  } catch (const NumericInputError& e) {
    throw DivergenceError(fmt::format("step {}: {}", step, e.what()), step);
  }
}

void check_finite_objective(double value, std::size_t step) {
  if (!std::isfinite(value)) {
    throw DivergenceError(fmt::format("non-finite loss at step {}", step), step);
  }
}

TrainRecord finish(std::vector<Member>& members, std::size_t total,
                   std::chrono::steady_clock::time_point start) {
  TrainRecord rec;
  rec.total_steps = total;
  for (auto& m : members) {
    Model final_model = m.model;
    if (m.ema) {
      final_model.params = *m.ema;
      rec.ema_models.push_back(final_model);
    }
    rec.models.push_back(std::move(final_model));
    rec.curves.push_back(std::move(m.curve));
    rec.stream_seeds.push_back(m.seed);
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rec;
}

std::pair<double, std::size_t> sam_params(const Objective& objective) {
  if (auto* o = std::get_if<SamObjective>(&objective)) return {o->rho, o->m};
  if (auto* o = std::get_if<ConsistFlatObjective>(&objective)) {
    return {o->rho, o->m};
  }
  return {0.0, 0};
}

// Gradient of the supervised objective for one member on one batch, using
// SAM when rho > 0.
SamResult member_gradient(const ProcedureSpec& proc, const Member& m,
                          const BatchCursor::Batch& batch, const Tensor* target,
                          double beta) {
  auto loss = supervised_loss(proc.model, batch.x, batch.y,
                              proc.label_smoothing, target, beta);
  const auto [rho, micro] = sam_params(proc.objective);
  return sam_gradient_detailed(loss, batch.y.size(), m.model.params, rho, micro);
}

void trace(const TrainHooks& hooks, std::size_t step, std::size_t index,
           double lr, const SamResult& r) {
  if (!hooks.on_step) return;
  hooks.on_step(StepTrace{step, index, lr, r.loss, r.perturbation_norms});
}

}  // namespace

TrainRecord train_standard(const ProcedureSpec& proc, const LabeledSet& train,
                           std::uint64_t seed, const TrainHooks& hooks) {
  check_training_inputs(proc, train);
  const auto start = std::chrono::steady_clock::now();
  std::vector<Member> members;
  members.push_back(make_member(proc, train, seed));
  auto& m = members.front();
  const auto total = total_steps(proc, train.size());
  for (std::size_t step = 0; step < total; ++step) {
    const double lr = lr_at(proc.schedule, step, total);
    auto batch = m.cursor.next();
    auto r = guard_step(step, [&] {
      return member_gradient(proc, m, batch, nullptr, 0.0);
    });
    check_finite_objective(r.loss, step);
    trace(hooks, step, 0, lr, r);
    apply_update(m, proc, train, r.gradient, lr, step, total);
  }
  return finish(members, total, start);
}

TrainRecord train_codistill_pair(const ProcedureSpec& proc,
                                 const LabeledSet& train, std::uint64_t seed_a,
                                 std::uint64_t seed_b, const TrainHooks& hooks) {
  check_training_inputs(proc, train);
  double beta = 0.0;
  if (auto* o = std::get_if<ConsistObjective>(&proc.objective)) {
    beta = o->beta;
  } else if (auto* o = std::get_if<ConsistFlatObjective>(&proc.objective)) {
    beta = o->beta;
  } else {
    throw DomainError("train_codistill needs a consist or consist_flat objective");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<Member> members;
  members.push_back(make_member(proc, train, seed_a));
  members.push_back(make_member(proc, train, seed_b));
  const auto total = total_steps(proc, train.size());
  for (std::size_t step = 0; step < total; ++step) {
    const double lr = lr_at(proc.schedule, step, total);
    BatchCursor::Batch batches[2] = {members[0].cursor.next(),
                                     members[1].cursor.next()};
    // Partner outputs are constants for each model's step.
    Tensor targets[2];
    if (beta != 0.0) {
      for (int i = 0; i < 2; ++i) {
        targets[i] = predict_proba(members[1 - i].model, batches[i].x);
      }
    }
    SamResult grads[2];
    for (int i = 0; i < 2; ++i) {
      grads[i] = guard_step(step, [&] {
        return member_gradient(proc, members[i], batches[i],
                               beta != 0.0 ? &targets[i] : nullptr, beta);
      });
      check_finite_objective(grads[i].loss, step);
      trace(hooks, step, static_cast<std::size_t>(i), lr, grads[i]);
    }
    for (int i = 0; i < 2; ++i) {
      apply_update(members[i], proc, train, grads[i].gradient, lr, step, total);
    }
  }
  return finish(members, total, start);
}

TrainRecord train_codistill(const ProcedureSpec& proc, const LabeledSet& train,
                            std::uint64_t seed, const TrainHooks& hooks) {
  return train_codistill_pair(proc, train, partner_seed(seed, 0),
                              partner_seed(seed, 1), hooks);
}

TrainRecord train_semi_codistill(const ProcedureSpec& proc,
                                 const LabeledSet& labeled,
                                 const Tensor& unlabeled, std::uint64_t seed,
                                 const TrainHooks& hooks) {
  check_training_inputs(proc, labeled);
  const auto* obj = std::get_if<SemiConsistObjective>(&proc.objective);
  if (obj == nullptr) {
    throw DomainError("train_semi_codistill needs a semi_consist objective");
  }
  if (unlabeled.rank() != 2 || unlabeled.rows() == 0) {
    throw DomainError("semi-supervised training needs a non-empty unlabeled set");
  }
  if (unlabeled.cols() != proc.model.input_dim) {
    throw ShapeError("unlabeled features do not match the model input_dim");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<Member> members;
  members.push_back(make_member(proc, labeled, partner_seed(seed, 0)));
  members.push_back(make_member(proc, labeled, partner_seed(seed, 1)));
  ParamVector teachers[2] = {members[0].model.params, members[1].model.params};
  const auto ub = obj->unlabeled_batch_size == 0 ? proc.batch_size
                                                 : obj->unlabeled_batch_size;
  BatchCursor unl(unlabeled, nullptr, ub,
                  derive_seed(seed, SeedRole::kUnlabeled),
                  derive_seed(hash_combine(seed, 1), SeedRole::kAugment),
                  proc.augment);
  const auto total = total_steps(proc, labeled.size());
  for (std::size_t step = 0; step < total; ++step) {
    const double lr = lr_at(proc.schedule, step, total);
    BatchCursor::Batch batches[2] = {members[0].cursor.next(),
                                     members[1].cursor.next()};
    const auto ubatch = unl.next();
    // Student i is pulled toward the EMA teacher of student 1 - i.
    Tensor targets[2];
    std::vector<double> weights[2];
    const double scale = obj->beta / static_cast<double>(ubatch.x.rows());
    for (int i = 0; i < 2; ++i) {
      targets[i] = predict_proba(
          Model{proc.model, teachers[1 - i], {}}, ubatch.x);
      weights[i].assign(ubatch.x.rows(), 0.0);
      if (obj->beta == 0.0) continue;
      for (std::size_t r = 0; r < ubatch.x.rows(); ++r) {
        auto t = targets[i].row(r);
        if (*std::max_element(t.begin(), t.end()) > obj->confidence_threshold) {
          weights[i][r] = scale;
        }
      }
    }
    SamResult grads[2];
    for (int i = 0; i < 2; ++i) {
      const auto& batch = batches[i];
      const bool any_mask = std::any_of(weights[i].begin(), weights[i].end(),
                                        [](double w) { return w != 0.0; });
      LossFn loss = [&, i, any_mask](ad::Tape& tape, ad::Var theta) {
        auto logits = forward_logits(tape, proc.model, theta, batch.x);
        auto l = ad::softmax_cross_entropy(logits, batch.y, proc.label_smoothing);
        if (!any_mask) return l;
        auto ulogits = forward_logits(tape, proc.model, theta, ubatch.x);
        return ad::add(l, ad::softmax_kl_from_target(targets[i], ulogits,
                                                     weights[i]));
      };
      grads[i] = guard_step(step, [&] {
        auto [value, g] = value_and_gradient(loss, members[i].model.params);
        SamResult r;
        r.gradient = std::move(g);
        r.loss = value;
        return r;
      });
      check_finite_objective(grads[i].loss, step);
      trace(hooks, step, static_cast<std::size_t>(i), lr, grads[i]);
    }
    for (int i = 0; i < 2; ++i) {
      apply_update(members[i], proc, labeled, grads[i].gradient, lr, step, total);
      ema_update_inplace(teachers[i], members[i].model.params, obj->ema_momentum);
    }
  }
  return finish(members, total, start);
}

TrainRecord train_distill(const ProcedureSpec& proc, const LabeledSet& train,
                          const Model& teacher, std::uint64_t seed,
                          const TrainHooks& hooks) {
  check_training_inputs(proc, train);
  const auto* obj = std::get_if<DistillObjective>(&proc.objective);
  if (obj == nullptr) throw DomainError("train_distill needs a distill objective");
  if (teacher.spec.input_dim != proc.model.input_dim ||
      teacher.spec.num_classes != proc.model.num_classes) {
    throw ShapeError("teacher input/output dimensions do not match the student");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<Member> members;
  members.push_back(make_member(proc, train, seed));
  auto& m = members.front();
  const auto total = total_steps(proc, train.size());
  for (std::size_t step = 0; step < total; ++step) {
    const double lr = lr_at(proc.schedule, step, total);
    auto batch = m.cursor.next();
    Tensor target;
    if (obj->beta_kl != 0.0) target = predict_proba(teacher, batch.x);
    auto r = guard_step(step, [&] {
      return member_gradient(proc, m, batch,
                             obj->beta_kl != 0.0 ? &target : nullptr,
                             obj->beta_kl);
    });
    check_finite_objective(r.loss, step);
    trace(hooks, step, 0, lr, r);
    apply_update(m, proc, train, r.gradient, lr, step, total);
  }
  return finish(members, total, start);
}

TrainRecord train_distill(const ProcedureSpec& proc, const LabeledSet& train,
                          std::uint64_t seed, const TrainHooks& hooks) {
  const auto* obj = std::get_if<DistillObjective>(&proc.objective);
  if (obj == nullptr) throw DomainError("train_distill needs a distill objective");
  Model teacher;
  try {
    teacher = load_checkpoint(obj->teacher);
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("teacher checkpoint: {}", e.what()));
  }
  return train_distill(proc, train, teacher, seed, hooks);
}

}  // namespace gengap
