#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debias_cl/encoder.hpp"
#include "debias_cl/losses.hpp"
#include "debias_cl/random.hpp"
#include "debias_cl/retrieval.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

// (n_init, n_step) continual-learning setup over n_sessions sessions.
struct Protocol {
  std::uint32_t n_init = 20;
  std::uint32_t n_step = 10;
  std::uint32_t n_sessions = 40;

  void validate() const {
    if (n_init == 0 || n_step == 0 || n_sessions == 0) throw ProtocolError("protocol: all counts must be positive");
    if (n_init > n_sessions) throw ProtocolError("protocol: n_init exceeds n_sessions");
    if ((n_sessions - n_init) % n_step != 0) {
      throw ProtocolError("protocol: (n_sessions - n_init) = " + std::to_string(n_sessions - n_init) +
                          " is not divisible by n_step = " + std::to_string(n_step));
    }
  }

  std::string label() const { return "(" + std::to_string(n_init) + "," + std::to_string(n_step) + ")"; }

  friend bool operator==(const Protocol&, const Protocol&) = default;
};

struct PlannedStep {
  std::size_t index = 1;    // 1-based
  SessionRange train;       // sessions learned in this step
  SessionRange evaluation;  // 1..train.last

  friend bool operator==(const PlannedStep&, const PlannedStep&) = default;
};

using StepPlan = std::vector<PlannedStep>;

// (n_sessions - n_init) / n_step + 1 steps: the initial block, then
// consecutive n_step-session blocks.
inline StepPlan plan_steps(const Protocol& p) {
  p.validate();
  StepPlan plan;
  plan.push_back(PlannedStep{1, SessionRange{1, p.n_init}, SessionRange{1, p.n_init}});
  for (std::uint32_t first = p.n_init + 1; first <= p.n_sessions; first += p.n_step) {
    const std::uint32_t last = first + p.n_step - 1;
    plan.push_back(PlannedStep{plan.size() + 1, SessionRange{first, last}, SessionRange{1, last}});
  }
  return plan;
}

inline double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  if (total_epochs == 0 || epoch >= total_epochs) throw DomainError("cosine_lr: epoch out of range");
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t timestep = 0;

  static AdamWState zeros_like(std::span<Tensor* const> params) {
    AdamWState s;
    for (const Tensor* p : params) {
      s.first_moment.emplace_back(p->shape(), 0.0);
      s.second_moment.emplace_back(p->shape(), 0.0);
    }
    return s;
  }
};

// Decoupled weight decay (theta -= lr*wd*theta), then the bias-corrected
// Adam step. A non-finite gradient aborts before anything is modified.
inline void adamw_update(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamWState& state, double lr,
                         const AdamWConfig& hp = {}) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adamw_update: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) throw DimensionError("adamw_update: gradient shape mismatch");
    for (std::size_t j = 0; j < grads[i].numel(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("adamw_update: non-finite gradient in tensor " + std::to_string(i) + " entry " +
                           std::to_string(j));
      }
    }
  }
  ++state.timestep;
  const double t = static_cast<double>(state.timestep);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = grads[i][j];
      p[j] -= lr * hp.weight_decay * p[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
  }
}

struct TrainConfig {
  double lr = 2.5e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  LossConfig loss;
  AdamWConfig adamw;
  double rehearsal_fraction = 0.0;
  std::uint64_t run_seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (epochs == 0) throw ConfigError("train: epochs must be at least 1");
    if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
    if (!(rehearsal_fraction >= 0.0 && rehearsal_fraction < 1.0)) {
      throw ConfigError("train: rehearsal_fraction must lie in [0,1)");
    }
    loss.validate();
  }
};

// Uniform sample without replacement of round(fraction * |prev|) indices,
// returned in their original order.
inline std::vector<std::size_t> rehearsal_sample(std::span<const std::size_t> prev, double fraction,
                                                 std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("rehearsal_sample: fraction must lie in [0,1)");
  const auto keep = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(prev.size())));
  std::vector<std::size_t> order(prev.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> out;
  out.reserve(keep);
  for (std::size_t i : order) out.push_back(prev[i]);
  return out;
}

// Mini-batches of a shuffled index list. A trailing batch of one sample is
// folded into the previous batch.
inline std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(indices.begin(), indices.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t end = std::min(indices.size(), i + batch_size);
    batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(i), indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

inline Batch assemble_batch(const Dataset& ds, std::span<const std::size_t> indices, BiasModel bias) {
  Batch b{Tensor::matrix(indices.size(), ds.header.fmri_dim), Tensor::matrix(indices.size(), ds.header.embed_dim), {}};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Sample& s = ds.samples[indices[r]];
    std::copy(s.fmri.begin(), s.fmri.end(), b.fmri.row_span(r).begin());
    std::copy(s.embedding.begin(), s.embedding.end(), b.centroids.row_span(r).begin());
    b.weights.push_back(bias_weight(bias, ds.meta(s.session)));
  }
  return b;
}

struct StepTrainResult {
  EncoderParams params;
  std::vector<double> epoch_losses;  // mean total loss per epoch
};

// Trains `params` on one step's samples (plus any rehearsal samples) for
// cfg.epochs epochs of AdamW under a per-epoch cosine learning rate. The
// distillation target is `snapshot`; with rehearsal enabled distillation is
// switched off. Shuffling is keyed by (run_seed, step, epoch).
inline StepTrainResult train_step(EncoderParams params, const Snapshot* snapshot, const Dataset& ds,
                                  std::span<const std::size_t> step_samples, std::span<const std::size_t> rehearsal,
                                  const TrainConfig& cfg, std::size_t step) {
  cfg.validate();
  std::vector<std::size_t> pool(step_samples.begin(), step_samples.end());
  pool.insert(pool.end(), rehearsal.begin(), rehearsal.end());
  if (pool.size() < 2) throw DomainError("train_step: need at least two training samples");

  LossConfig loss_cfg = cfg.loss;
  if (cfg.rehearsal_fraction > 0.0) loss_cfg.distill = DistillKind::None;

  std::vector<Tensor*> tensors = params.parameters();
  AdamWState state = AdamWState::zeros_like(tensors);
  StepTrainResult result;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr);
    const auto batches = make_batches(pool, cfg.batch_size, derive_seed(cfg.run_seed, {step, epoch}));
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch batch = assemble_batch(ds, batches[bi], loss_cfg.bias);
      Tape tape;
      const BoundEncoder bound = bind(tape, params);
      const LossTerms terms = total_loss(tape, bound, batch, snapshot, loss_cfg);
      const double value = terms.total.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("train_step: non-finite loss at step " + std::to_string(step) + ", epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(bi));
      }
      tape.backward(terms.total);
      std::vector<Tensor> grads;
      for (const Var& v : bound.parameters()) grads.push_back(tape.grad(v));
      adamw_update(tensors, grads, state, lr, cfg.adamw);
      loss_sum += value;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches.size()));
  }
  result.params = std::move(params);
  return result;
}

struct StepOutcome {
  PlannedStep plan;
  Snapshot entry;  // parameters the step started from
  Snapshot exit;   // parameters after training; the next step's teacher
  std::vector<double> epoch_losses;
  std::vector<std::size_t> rehearsal;  // dataset indices replayed in this step
  std::vector<ReportRow> report;       // one row per direction
};

struct ProtocolResult {
  std::vector<StepOutcome> steps;

  std::vector<ReportRow> report_rows() const {
    std::vector<ReportRow> rows;
    for (const StepOutcome& s : steps) rows.insert(rows.end(), s.report.begin(), s.report.end());
    return rows;
  }
};

// Session-incremental training: each step warm-starts from the previous step's
// exit parameters, distills against a frozen snapshot of them, and is then
// evaluated on the test samples of every session seen so far.
inline ProtocolResult run_protocol(const Dataset& ds, const Protocol& protocol, const EncoderConfig& encoder_cfg,
                                   const TrainConfig& cfg, const RetrievalConfig& retrieval) {
  if (protocol.n_sessions > ds.header.sessions) {
    throw ProtocolError("run_protocol: protocol needs " + std::to_string(protocol.n_sessions) +
                        " sessions, dataset has " + std::to_string(ds.header.sessions));
  }
  if (encoder_cfg.input_dim != ds.header.fmri_dim || encoder_cfg.output_dim != ds.header.embed_dim) {
    throw DimensionError("run_protocol: encoder dimensions do not match the dataset");
  }
  const StepPlan plan = plan_steps(protocol);
  EncoderParams params = init_encoder(encoder_cfg);
  Snapshot teacher;
  std::vector<std::size_t> retained;
  ProtocolResult result;

  for (const PlannedStep& ps : plan) {
    StepOutcome out;
    out.plan = ps;
    out.entry = Snapshot::take(params, ps.index - 1);
    out.rehearsal = retained;
    const std::vector<std::size_t> train_idx = ds.select(ps.train, Split::Train);
    StepTrainResult trained =
        train_step(params, teacher.empty() ? nullptr : &teacher, ds, train_idx, retained, cfg, ps.index);
    params = std::move(trained.params);
    out.epoch_losses = std::move(trained.epoch_losses);
    out.exit = Snapshot::take(params, ps.index);
    out.report = evaluate_step(params, ds, ps.evaluation, ps.index, retrieval);
    teacher = out.exit;
    retained = cfg.rehearsal_fraction > 0.0
                   ? rehearsal_sample(train_idx, cfg.rehearsal_fraction, derive_seed(cfg.run_seed, {ps.index, 0xBEEFu}))
                   : std::vector<std::size_t>{};
    result.steps.push_back(std::move(out));
  }
  return result;
}

}  // namespace debias_cl
