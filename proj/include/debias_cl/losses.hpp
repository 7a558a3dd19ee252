#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debias_cl/autodiff.hpp"
#include "debias_cl/encoder.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

enum class BiasModel : std::uint8_t { None = 0, ResponseAccuracy = 1, BrainActivation = 2 };
enum class DistillKind : std::uint8_t { None = 0, L2 = 1, AFM = 2 };

inline std::string to_string(BiasModel b) {
  switch (b) {
    case BiasModel::None: return "none";
    case BiasModel::ResponseAccuracy: return "response_accuracy";
    case BiasModel::BrainActivation: return "brain_activation";
  }
  return "?";
}

inline std::string to_string(DistillKind k) {
  switch (k) {
    case DistillKind::None: return "none";
    case DistillKind::L2: return "l2";
    case DistillKind::AFM: return "afm";
  }
  return "?";
}

struct LossConfig {
  double temperature = 0.1;
  double lambda_cl = 1.0;
  bool symmetric_contrastive = false;
  DistillKind distill = DistillKind::AFM;
  BiasModel bias = BiasModel::ResponseAccuracy;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("loss: temperature must be positive");
    if (!(lambda_cl >= 0.0)) throw ConfigError("loss: lambda_cl must be non-negative");
  }
};

// Importance weight e^(1 - rate) of one session, where the rate is the
// response accuracy r(t) or the activated-voxel fraction a(t).
inline double bias_weight_from_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("bias_weight: rate " + std::to_string(rate) + " outside [0,1]");
  return std::exp(1.0 - rate);
}

inline double bias_weight(BiasModel model, const SessionMeta& meta) {
  switch (model) {
    case BiasModel::None: return 1.0;
    case BiasModel::ResponseAccuracy: return bias_weight_from_rate(meta.response_accuracy);
    case BiasModel::BrainActivation: return bias_weight_from_rate(meta.activation_fraction);
  }
  throw DomainError("bias_weight: unknown model");
}

namespace detail {

// Mean over rows of weights[i] * -log softmax(logits row i)[i].
template <class T>
T weighted_diagonal_nll(const T& logits, const Tensor& weights) {
  T per_sample = scale(diagonal(log_softmax_rows(logits)), -1.0);
  return mean(mul(per_sample, lift(per_sample, weights)));
}

}  // namespace detail

// De-biased contrastive loss. Row i of z and c is the positive pair. For each
// centroid the softmax runs over the brain embeddings of the batch, and each
// sample's term is scaled by its session weight; the result is the batch mean.
template <class T>
T dcl_loss(const T& z, const T& c, std::span<const double> weights, double temperature, bool symmetric = false) {
  const Tensor& zv = value_of(z);
  const Tensor& cv = value_of(c);
  if (zv.shape() != cv.shape()) {
    throw DimensionError("dcl_loss: shape mismatch " + shape_string(zv.shape()) + " vs " + shape_string(cv.shape()));
  }
  if (zv.rank() != 2 || zv.rows() < 2) throw DimensionError("dcl_loss: need a batch of at least 2 pairs");
  if (weights.size() != zv.rows()) throw DimensionError("dcl_loss: weights length does not match batch");
  if (!(temperature > 0.0)) throw DomainError("dcl_loss: temperature must be positive");

  const Tensor w = Tensor::column(weights);
  T zn = rowwise_l2_normalize(z);
  T cn = rowwise_l2_normalize(c);
  // logits(i, j) = c_i . z_j / tau
  T loss = detail::weighted_diagonal_nll(scale(matmul(cn, transpose(zn)), 1.0 / temperature), w);
  if (!symmetric) return loss;
  T reverse = detail::weighted_diagonal_nll(scale(matmul(zn, transpose(cn)), 1.0 / temperature), w);
  return scale(add(loss, reverse), 0.5);
}

// Mean over rows of (1 - cos(prev_i, cur_i))^2.
template <class T>
T afm_distance(const T& prev, const T& cur) {
  const Tensor& pv = value_of(prev);
  if (pv.shape() != value_of(cur).shape()) throw DimensionError("afm_distance: shape mismatch");
  T cosine = row_sum(mul(rowwise_l2_normalize(prev), rowwise_l2_normalize(cur)));
  return mean(square(add_scalar(scale(cosine, -1.0), 1.0)));
}

// Mean over rows of |cur_i - prev_i|^2.
template <class T>
T l2_distill_distance(const T& prev, const T& cur) {
  if (value_of(prev).shape() != value_of(cur).shape()) throw DimensionError("l2_distill_distance: shape mismatch");
  return mean(row_sum(square(sub(cur, prev))));
}

// The snapshot side is constant: on a tape it enters as a constant node, so
// gradients only reach the current model.
inline Var afm_distance(const Tensor& prev, const Var& cur) { return afm_distance(lift(cur, prev), cur); }
inline Var l2_distill_distance(const Tensor& prev, const Var& cur) { return l2_distill_distance(lift(cur, prev), cur); }

// Mean of the per-tap distances between the previous and current model.
template <class P, class C>
auto cl_loss(const ForwardTrace<P>& prev, const ForwardTrace<C>& cur, DistillKind kind) {
  if (kind == DistillKind::None) throw ConfigError("cl_loss: distillation kind is None");
  if (prev.intermediates.size() != cur.intermediates.size() || cur.intermediates.empty()) {
    throw DimensionError("cl_loss: traces have different tap counts");
  }
  auto distance = [kind](const auto& p, const auto& c) {
    return kind == DistillKind::AFM ? afm_distance(p, c) : l2_distill_distance(p, c);
  };
  auto total = distance(prev.intermediates[0], cur.intermediates[0]);
  for (std::size_t i = 1; i < cur.intermediates.size(); ++i)
    total = add(total, distance(prev.intermediates[i], cur.intermediates[i]));
  return scale(total, 1.0 / static_cast<double>(cur.intermediates.size()));
}

// One training mini-batch: brain signals, their paired centroids, and the
// per-sample bias weights.
struct Batch {
  Tensor fmri;       // [B x n]
  Tensor centroids;  // [B x d]
  std::vector<double> weights;
};

struct LossTerms {
  Var total;
  Var contrastive;
  std::optional<Var> distill;
};

// Contrastive term plus lambda_cl times the distillation term. Without a
// snapshot (first step) or with distillation off, the contrastive term alone.
inline LossTerms total_loss(Tape& tape, const BoundEncoder& encoder, const Batch& batch, const Snapshot* snapshot,
                            const LossConfig& cfg) {
  cfg.validate();
  Var x = tape.constant(batch.fmri);
  ForwardTrace<Var> cur = forward(encoder, x);
  Var c = tape.constant(batch.centroids);
  LossTerms terms;
  terms.contrastive = dcl_loss(cur.output, c, batch.weights, cfg.temperature, cfg.symmetric_contrastive);
  terms.total = terms.contrastive;
  if (snapshot && !snapshot->empty() && cfg.distill != DistillKind::None) {
    ForwardTrace<Tensor> prev = snapshot->forward(batch.fmri);
    terms.distill = cl_loss(prev, cur, cfg.distill);
    terms.total = add(terms.contrastive, scale(*terms.distill, cfg.lambda_cl));
  }
  return terms;
}

}  // namespace debias_cl
