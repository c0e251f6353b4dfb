#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gengap/autodiff.hpp"
#include "gengap/data.hpp"
#include "gengap/model.hpp"

namespace gengap {

// ---------------------------------------------------------------------------
// Procedure description

/// Plain cross-entropy.
struct StandardObjective {};
/// Co-distillation: two models, each penalized by beta * KL(partner || self)
/// on its own labeled batch.
struct ConsistObjective {
  double beta = 1.0;
};
/// Sharpness-aware minimization with radius rho and micro-batch size m.
struct SamObjective {
  double rho = 0.05;
  std::size_t m = 0;  // 0 means the whole batch
};
/// Co-distillation whose per-model step uses the SAM gradient.
struct ConsistFlatObjective {
  double beta = 1.0;
  double rho = 0.05;
  std::size_t m = 0;
};
/// Semi-supervised co-distillation against the partner's EMA teacher with a
/// confidence mask on the unlabeled batch.
struct SemiConsistObjective {
  double beta = 1.0;
  double confidence_threshold = 0.5;
  double ema_momentum = 0.999;
  std::size_t unlabeled_batch_size = 0;  // 0 means batch_size
};
/// Student trained against a frozen teacher checkpoint.
struct DistillObjective {
  std::string teacher;
  double beta_kl = 1.0;
};

using Objective =
    std::variant<StandardObjective, ConsistObjective, SamObjective,
                 ConsistFlatObjective, SemiConsistObjective, DistillObjective>;

std::string objective_name(const Objective& objective);
/// True for objectives that train two models per run.
bool is_paired(const Objective& objective);

enum class ScheduleKind { kConstant, kCosine, kLinear };

struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double base_lr = 0.1;
  std::size_t warmup_steps = 0;
  /// Cosine floor or linear end value as a fraction of base_lr.
  double end_fraction = 0.0;
};

/// Learning rate at `step` of `total_steps`. Linear warmup from 0, then
/// constant, cosine decay or linear decay reaching end_fraction * base_lr at
/// step == total_steps.
double lr_at(const Schedule& schedule, std::size_t step, std::size_t total_steps);

enum class AugmentKind { kNone, kGaussianNoise, kShift };

/// Per-sample, per-epoch input perturbation. Gaussian noise adds
/// magnitude * N(0, I); shift adds a uniform offset in [-magnitude, magnitude]
/// to every coordinate independently.
struct Augmentation {
  AugmentKind kind = AugmentKind::kNone;
  double magnitude = 0.0;
};

struct ProcedureSpec {
  std::string name;
  ModelSpec model;
  Objective objective = StandardObjective{};
  double momentum = 0.9;  // Nesterov
  Schedule schedule;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> update_steps;
  std::size_t batch_size = 32;
  double weight_decay = 0.0;
  double label_smoothing = 0.0;
  std::optional<double> grad_clip;
  /// Iterate averaging; when set the final model is the EMA.
  std::optional<double> ema_momentum;
  Augmentation augment;
  std::uint64_t base_seed = 0;
  /// Checkpoint used as the initial parameters instead of random init.
  std::optional<std::string> init_from;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Optimizer primitives

struct SgdState {
  double momentum = 0.9;
  std::vector<double> velocity;
};

/// Optional global-norm clip, decoupled weight decay, then the Nesterov
/// update v <- mu v - lr g; theta <- theta + mu v - lr g. Throws
/// DivergenceError tagged with `step` if the gradient is not finite.
void sgd_step(ParamVector& params, const ParamVector& grads, SgdState& state,
              double lr, double weight_decay, std::optional<double> grad_clip,
              std::size_t step = 0);

/// momentum * avg + (1 - momentum) * current.
ParamVector ema_update(const ParamVector& avg, const ParamVector& current,
                       double momentum);
void ema_update_inplace(ParamVector& avg, const ParamVector& current,
                        double momentum);

/// Loss over examples [begin, end) of a batch.
using RangeLossFn = std::function<ad::Var(ad::Tape&, ad::Var theta,
                                          std::size_t begin, std::size_t end)>;

struct SamResult {
  ParamVector gradient;
  /// Unperturbed loss averaged over micro-batches.
  double loss = 0.0;
  /// ||epsilon||_2 applied to each micro-batch (0 where skipped).
  std::vector<double> perturbation_norms;
};

/// SAM gradient: the batch is cut into ceil(B/m) consecutive micro-batches;
/// each contributes grad L_micro(theta + rho g/|g|); contributions are
/// averaged. rho == 0 returns the plain gradient of the whole batch.
SamResult sam_gradient_detailed(const RangeLossFn& loss, std::size_t batch_size,
                                const ParamVector& at, double rho,
                                std::size_t m);
ParamVector sam_gradient(const RangeLossFn& loss, std::size_t batch_size,
                         const ParamVector& at, double rho, std::size_t m);

// ---------------------------------------------------------------------------
// Training runs

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t step = 0;  // updates completed
  double train_loss = 0.0;
  double train_error = 0.0;
};

struct StepTrace {
  std::size_t step = 0;
  std::size_t model_index = 0;
  double lr = 0.0;
  double batch_objective = 0.0;
  std::vector<double> sam_perturbation_norms;
};

struct TrainHooks {
  std::function<void(const StepTrace&)> on_step;
};

struct TrainRecord {
  /// Final models: the EMA when iterate averaging is on, else last iterate.
  std::vector<Model> models;
  /// EMA models (empty when no averaging is configured).
  std::vector<Model> ema_models;
  /// Per-model curves of plain cross-entropy on the un-augmented training
  /// set, evaluated on the reported model at every epoch boundary.
  std::vector<std::vector<EpochStats>> curves;
  /// Sub-seeds keying each model's streams.
  std::vector<std::uint64_t> stream_seeds;
  std::size_t total_steps = 0;
  double wall_seconds = 0.0;
};

std::size_t total_steps(const ProcedureSpec& proc, std::size_t train_size);

TrainRecord train_standard(const ProcedureSpec& proc, const LabeledSet& train,
                           std::uint64_t seed, const TrainHooks& hooks = {});

/// Two models trained jointly with sub-seeds derived from `seed`.
TrainRecord train_codistill(const ProcedureSpec& proc, const LabeledSet& train,
                            std::uint64_t seed, const TrainHooks& hooks = {});
/// Same with explicit sub-seeds for models a and b.
TrainRecord train_codistill_pair(const ProcedureSpec& proc,
                                 const LabeledSet& train, std::uint64_t seed_a,
                                 std::uint64_t seed_b,
                                 const TrainHooks& hooks = {});

TrainRecord train_semi_codistill(const ProcedureSpec& proc,
                                 const LabeledSet& labeled,
                                 const Tensor& unlabeled, std::uint64_t seed,
                                 const TrainHooks& hooks = {});

TrainRecord train_distill(const ProcedureSpec& proc, const LabeledSet& train,
                          const Model& teacher, std::uint64_t seed,
                          const TrainHooks& hooks = {});
/// Loads the teacher from the objective's checkpoint path.
TrainRecord train_distill(const ProcedureSpec& proc, const LabeledSet& train,
                          std::uint64_t seed, const TrainHooks& hooks = {});

/// Sub-seeds used for the two members of a paired run.
std::uint64_t partner_seed(std::uint64_t seed, std::size_t member);

/// beta * mean over rows of 1[max teacher_probs(x) > threshold] *
/// KL(teacher_probs(x) || softmax(student_logits(x))), the masked
/// consistency term of the semi-supervised objective.
double masked_consistency_penalty(const Tensor& teacher_probs,
                                  const Tensor& student_logits, double beta,
                                  double threshold);

}  // namespace gengap
