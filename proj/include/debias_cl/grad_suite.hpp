#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "debias_cl/grad_check.hpp"
#include "debias_cl/losses.hpp"
#include "debias_cl/random.hpp"

namespace debias_cl {

struct GradSuiteCase {
  std::string name;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

namespace detail {

inline Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

inline SessionMeta random_meta(Rng& rng) {
  SessionMeta m;
  m.session = 1;
  m.response_accuracy = rng.uniform(0.5, 1.0);
  m.consistency = m.response_accuracy;
  m.activation_fraction = rng.uniform(0.2, 0.8);
  return m;
}

inline EncoderConfig small_encoder(std::uint64_t seed) {
  EncoderConfig ec;
  ec.input_dim = 6;
  ec.hidden_dim = 5;
  ec.tap_count = 3;
  ec.output_dim = 4;
  ec.init_seed = seed;
  return ec;
}

inline BoundEncoder bound_from(const EncoderConfig& ec, const std::vector<Var>& leaves) {
  BoundEncoder b{ec, {}, {}};
  for (std::size_t i = 0; i + 1 < leaves.size(); i += 2) {
    b.weights.push_back(leaves[i]);
    b.biases.push_back(leaves[i + 1]);
  }
  return b;
}

}  // namespace detail

// Finite-difference checks of every loss and the encoder pass over
// `instances` random problems each. Instance k of every case draws from
// derive_seed(seed, {case, k}).
inline std::vector<GradSuiteCase> run_grad_suite(std::size_t instances = 20, std::uint64_t seed = 2024) {
  using Builder = std::function<GradCheckResult(Rng&, std::uint64_t)>;

  auto dcl_case = [](BiasModel model) -> Builder {
    return [model](Rng& rng, std::uint64_t k) {
      const std::size_t batch = 2 + rng.below(7), dim = 2 + rng.below(15);
      std::vector<double> w(batch);
      for (double& v : w) v = bias_weight(model, detail::random_meta(rng));
      const bool symmetric = k % 2 == 1;
      const double tau = rng.uniform(0.05, 1.0);
      return grad_check(
          [&](Tape&, const std::vector<Var>& p) { return dcl_loss(p[0], p[1], w, tau, symmetric); },
          {detail::random_matrix(rng, batch, dim), detail::random_matrix(rng, batch, dim)});
    };
  };

  auto distance_case = [](DistillKind kind) -> Builder {
    return [kind](Rng& rng, std::uint64_t) {
      const std::size_t rows = 1 + rng.below(6), cols = 2 + rng.below(10);
      return grad_check(
          [&](Tape&, const std::vector<Var>& p) {
            return kind == DistillKind::AFM ? afm_distance(p[0], p[1]) : l2_distill_distance(p[0], p[1]);
          },
          {detail::random_matrix(rng, rows, cols), detail::random_matrix(rng, rows, cols)});
    };
  };

  Builder combined = [](Rng& rng, std::uint64_t k) {
    const EncoderConfig ec = detail::small_encoder(rng.next());
    EncoderParams teacher = init_encoder(ec);
    EncoderParams student = teacher;
    for (Tensor* t : student.parameters())
      for (double& v : t->data()) v += rng.normal(0.0, 0.1);
    const std::size_t batch = 4;
    Batch b{detail::random_matrix(rng, batch, ec.input_dim),
            rowwise_l2_normalize(detail::random_matrix(rng, batch, ec.output_dim)),
            {}};
    for (std::size_t i = 0; i < batch; ++i)
      b.weights.push_back(bias_weight(BiasModel::ResponseAccuracy, detail::random_meta(rng)));
    LossConfig cfg;
    cfg.distill = k % 2 == 0 ? DistillKind::AFM : DistillKind::L2;
    cfg.lambda_cl = rng.uniform(0.5, 2.0);
    const Snapshot snap = Snapshot::take(teacher, 1);
    std::vector<Tensor> params;
    for (const Tensor* t : std::as_const(student).parameters()) params.push_back(*t);
    return grad_check(
        [&](Tape& tape, const std::vector<Var>& p) {
          return total_loss(tape, detail::bound_from(ec, p), b, &snap, cfg).total;
        },
        params);
  };

  Builder encoder_pass = [](Rng& rng, std::uint64_t) {
    const EncoderConfig ec = detail::small_encoder(rng.next());
    const EncoderParams init = init_encoder(ec);
    const Tensor x = detail::random_matrix(rng, 3, ec.input_dim);
    const Tensor proj = detail::random_matrix(rng, 3, ec.output_dim);
    const Tensor tap_proj = detail::random_matrix(rng, 3, ec.hidden_dim);
    std::vector<Tensor> params;
    for (const Tensor* t : init.parameters()) params.push_back(*t);
    return grad_check(
        [&](Tape& tape, const std::vector<Var>& p) {
          ForwardTrace<Var> tr = forward(detail::bound_from(ec, p), tape.constant(x));
          Var out = sum(mul(tr.output, tape.constant(proj)));
          for (const Var& h : tr.intermediates) out = add(out, sum(mul(h, tape.constant(tap_proj))));
          return out;
        },
        params);
  };

  const std::vector<std::pair<std::string, Builder>> cases = {
      {"dcl_response_accuracy", dcl_case(BiasModel::ResponseAccuracy)},
      {"dcl_brain_activation", dcl_case(BiasModel::BrainActivation)},
      {"afm_distance", distance_case(DistillKind::AFM)},
      {"l2_distill_distance", distance_case(DistillKind::L2)},
      {"combined_objective", combined},
      {"encoder_forward", encoder_pass},
  };

  std::vector<GradSuiteCase> out;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    GradSuiteCase rc{cases[ci].first, instances, 0.0, 0};
    for (std::uint64_t k = 0; k < instances; ++k) {
      Rng rng(derive_seed(seed, {ci, k}));
      const GradCheckResult r = cases[ci].second(rng, k);
      rc.max_relative_error = std::max(rc.max_relative_error, r.max_relative_error);
      rc.coordinates_checked += r.coordinates_checked;
    }
    out.push_back(rc);
  }
  return out;
}

}  // namespace debias_cl
