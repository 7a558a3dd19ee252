#include <gtest/gtest.h>

#include <cmath>

#include "debias_cl/grad_suite.hpp"
#include "debias_cl/losses.hpp"
#include "debias_cl/random.hpp"

using namespace debias_cl;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// Plain scalar loops, written without any tensor helper: for each centroid i,
// -w_i log( exp(s_ii / tau) / sum_j exp(s_ij / tau) ) with s_ij the cosine of
// c_i and z_j, averaged over i.
double scalar_dcl(const std::vector<std::vector<double>>& z, const std::vector<std::vector<double>>& c,
                  const std::vector<double>& w, double tau, bool symmetric) {
  const std::size_t b = z.size(), d = z[0].size();
  auto cosine = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t k = 0; k < d; ++k) {
      uv += u[k] * v[k];
      uu += u[k] * u[k];
      vv += v[k] * v[k];
    }
    return uv / (std::sqrt(uu) * std::sqrt(vv));
  };
  auto one_direction = [&](const auto& anchors, const auto& candidates) {
    long double total = 0;
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> s(b);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < b; ++j) {
        s[j] = cosine(anchors[i], candidates[j]) / tau;
        mx = std::max(mx, s[j]);
      }
      long double denom = 0;
      for (std::size_t j = 0; j < b; ++j) denom += std::exp(static_cast<long double>(s[j] - mx));
      total += w[i] * -(s[i] - mx - std::log(denom));
    }
    return static_cast<double>(total / b);
  };
  const double forward = one_direction(c, z);
  return symmetric ? 0.5 * (forward + one_direction(z, c)) : forward;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < t.rows(); ++i) out.emplace_back(t.row_span(i).begin(), t.row_span(i).end());
  return out;
}

}  // namespace

TEST(BiasWeight, ClosedForms) {
  EXPECT_EQ(bias_weight_from_rate(1.0), 1.0);
  EXPECT_NEAR(bias_weight_from_rate(0.75), std::exp(0.25), 1e-12);
  EXPECT_NEAR(bias_weight_from_rate(0.0), std::exp(1.0), 1e-12);
  EXPECT_THROW(bias_weight_from_rate(1.5), DomainError);
  EXPECT_THROW(bias_weight_from_rate(-0.1), DomainError);
  EXPECT_THROW(bias_weight_from_rate(NAN), DomainError);
}

TEST(BiasWeight, ModelSelectsRate) {
  SessionMeta m{3, 0.8, 0.83, 0.4};
  EXPECT_EQ(bias_weight(BiasModel::None, m), 1.0);
  EXPECT_NEAR(bias_weight(BiasModel::ResponseAccuracy, m), std::exp(0.2), 1e-15);
  EXPECT_NEAR(bias_weight(BiasModel::BrainActivation, m), std::exp(0.6), 1e-15);
}

TEST(BiasWeight, MonotoneInDecay) {
  double prev = 0.0;
  for (double r = 1.0; r >= 0.0; r -= 0.05) {
    const double w = bias_weight_from_rate(std::max(r, 0.0));
    EXPECT_GT(w, prev);
    prev = w;
  }
}

TEST(Afm, ClosedForms) {
  Rng rng(11);
  const Tensor z = random_matrix(rng, 6, 5);
  EXPECT_NEAR(afm_distance(z, z).item(), 0.0, 1e-15);
  EXPECT_NEAR(afm_distance(z, scale(z, -1.0)).item(), 4.0, 1e-12);
  const Tensor other = random_matrix(rng, 6, 5);
  EXPECT_NEAR(afm_distance(z, other).item(), afm_distance(scale(z, 7.5), scale(other, 0.01)).item(), 1e-12);
}

TEST(Afm, OrthogonalRowsGiveOne) {
  const Tensor a = Tensor::matrix({{1, 0}, {0, 2}});
  const Tensor b = Tensor::matrix({{0, 3}, {-1, 0}});
  EXPECT_NEAR(afm_distance(a, b).item(), 1.0, 1e-15);
}

TEST(Afm, DegenerateRowRejected) {
  const Tensor a = Tensor::matrix({{1, 0}, {0, 0}});
  EXPECT_THROW(afm_distance(a, a), DegenerateVectorError);
}

TEST(L2Distill, ClosedFormAndNotScaleInvariant) {
  const Tensor a = Tensor::matrix({{1, 2}, {0, 0}});
  const Tensor b = Tensor::matrix({{1, 0}, {3, 4}});
  EXPECT_NEAR(l2_distill_distance(a, b).item(), (4.0 + 25.0) / 2.0, 1e-15);
  EXPECT_GT(l2_distill_distance(a, scale(a, 2.0)).item(), 0.0);
}

TEST(ClLoss, MeanOverTaps) {
  // Per-tap l2 distances 0, 1 and 4 average to 5/3.
  ForwardTrace<Tensor> prev, cur;
  prev.intermediates = {Tensor::matrix({{0.0}}), Tensor::matrix({{0.0}}), Tensor::matrix({{0.0}})};
  cur.intermediates = {Tensor::matrix({{0.0}}), Tensor::matrix({{1.0}}), Tensor::matrix({{2.0}})};
  EXPECT_NEAR(cl_loss(prev, cur, DistillKind::L2).item(), 5.0 / 3.0, 1e-15);
  EXPECT_THROW(cl_loss(prev, cur, DistillKind::None), ConfigError);
  cur.intermediates.pop_back();
  EXPECT_THROW(cl_loss(prev, cur, DistillKind::L2), DimensionError);
}

TEST(Dcl, UnitWeightsEqualInfoNce) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor z = random_matrix(rng, 5, 4), c = random_matrix(rng, 5, 4);
    const std::vector<double> ones(5, 1.0);
    // InfoNCE with centroids as anchors: mean_i -log softmax_j(cos(c_i, z_j)/tau)[i].
    const Tensor logits = scale(matmul(rowwise_l2_normalize(c), transpose(rowwise_l2_normalize(z))), 1.0 / 0.1);
    const double info_nce = -mean(diagonal(log_softmax_rows(logits))).item();
    EXPECT_NEAR(dcl_loss(z, c, ones, 0.1).item(), info_nce, 1e-12);
  }
}

TEST(Dcl, UniformWeightScalesLoss) {
  Rng rng(22);
  const Tensor z = random_matrix(rng, 4, 3), c = random_matrix(rng, 4, 3);
  const std::vector<double> ones(4, 1.0), e(4, std::exp(0.25));
  EXPECT_NEAR(dcl_loss(z, c, e, 0.2).item(), std::exp(0.25) * dcl_loss(z, c, ones, 0.2).item(), 1e-12);
}

TEST(Dcl, PerfectAlignmentBeatsShuffled) {
  Rng rng(23);
  const Tensor c = random_matrix(rng, 6, 8);
  const std::vector<double> ones(6, 1.0);
  const std::vector<std::size_t> rotate{1, 2, 3, 4, 5, 0};
  EXPECT_LT(dcl_loss(c, c, ones, 0.1).item(), dcl_loss(gather_rows(c, rotate), c, ones, 0.1).item());
}

TEST(Dcl, MatchesScalarOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 2 + rng.below(7), d = 1 + rng.below(16);
    const Tensor z = random_matrix(rng, b, d), c = random_matrix(rng, b, d);
    std::vector<double> w(b);
    for (double& v : w) v = bias_weight_from_rate(rng.uniform());
    const double tau = rng.uniform(0.05, 1.0);
    const bool symmetric = trial % 3 == 0;
    EXPECT_NEAR(dcl_loss(z, c, w, tau, symmetric).item(), scalar_dcl(rows_of(z), rows_of(c), w, tau, symmetric), 1e-10)
        << "trial " << trial << " B=" << b << " d=" << d;
  }
}

TEST(Dcl, InputValidation) {
  const Tensor a = Tensor::matrix(3, 2, 1.0), b = Tensor::matrix(3, 3, 1.0);
  const std::vector<double> w3(3, 1.0), w2(2, 1.0);
  EXPECT_THROW(dcl_loss(a, b, w3, 0.1), DimensionError);
  EXPECT_THROW(dcl_loss(a, a, w2, 0.1), DimensionError);
  EXPECT_THROW(dcl_loss(a, a, w3, 0.0), DomainError);
  EXPECT_THROW(dcl_loss(Tensor::matrix(1, 2, 1.0), Tensor::matrix(1, 2, 1.0), w2, 0.1), DimensionError);
}

TEST(TotalLoss, ContrastiveOnlyWithoutSnapshot) {
  EncoderConfig ec;
  ec.input_dim = 5;
  ec.hidden_dim = 6;
  ec.output_dim = 3;
  const EncoderParams p = init_encoder(ec);
  Rng rng(41);
  Batch batch{random_matrix(rng, 4, 5), rowwise_l2_normalize(random_matrix(rng, 4, 3)), {1.0, 1.1, 1.2, 1.3}};
  LossConfig cfg;
  Tape tape;
  const LossTerms terms = total_loss(tape, bind(tape, p), batch, nullptr, cfg);
  EXPECT_FALSE(terms.distill.has_value());
  EXPECT_EQ(terms.total.value(), terms.contrastive.value());
}

TEST(TotalLoss, AddsWeightedDistillation) {
  EncoderConfig ec;
  ec.input_dim = 5;
  ec.hidden_dim = 6;
  ec.output_dim = 3;
  const EncoderParams teacher = init_encoder(ec);
  ec.init_seed = 99;
  const EncoderParams student = init_encoder(ec);
  Rng rng(42);
  Batch batch{random_matrix(rng, 4, 5), rowwise_l2_normalize(random_matrix(rng, 4, 3)), {1, 1, 1, 1}};
  const Snapshot snap = Snapshot::take(teacher, 1);
  for (DistillKind kind : {DistillKind::AFM, DistillKind::L2}) {
    LossConfig cfg;
    cfg.distill = kind;
    cfg.lambda_cl = 2.5;
    Tape tape;
    const LossTerms t = total_loss(tape, bind(tape, student), batch, &snap, cfg);
    ASSERT_TRUE(t.distill.has_value());
    EXPECT_GT(t.distill->value().item(), 0.0);
    EXPECT_NEAR(t.total.value().item(), t.contrastive.value().item() + 2.5 * t.distill->value().item(), 1e-14);

    cfg.distill = DistillKind::None;
    Tape tape2;
    EXPECT_FALSE(total_loss(tape2, bind(tape2, student), batch, &snap, cfg).distill.has_value());
  }
}

TEST(TotalLoss, SnapshotReceivesNoGradient) {
  EncoderConfig ec;
  ec.input_dim = 3;
  ec.hidden_dim = 4;
  ec.output_dim = 2;
  const EncoderParams p = init_encoder(ec);
  const Snapshot snap = Snapshot::take(p, 1);
  Rng rng(43);
  Batch batch{random_matrix(rng, 3, 3), rowwise_l2_normalize(random_matrix(rng, 3, 2)), {1, 1, 1}};
  LossConfig cfg;
  Tape tape;
  const std::size_t before = tape.size();
  const LossTerms t = total_loss(tape, bind(tape, p), batch, &snap, cfg);
  tape.backward(t.total);
  // Identical parameters: distillation is at its minimum and only the
  // contrastive term drives the gradient.
  EXPECT_NEAR(t.distill->value().item(), 0.0, 1e-15);
  EXPECT_GT(tape.size(), before);
  EXPECT_EQ(snap.params(), p);
}

TEST(GradSuite, AllCasesBelowTolerance) {
  for (const GradSuiteCase& c : run_grad_suite(5)) {
    EXPECT_LT(c.max_relative_error, 1e-5) << c.name;
    EXPECT_GT(c.coordinates_checked, 0u) << c.name;
  }
}

TEST(Afm, RangeAndSymmetry) {
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    const Tensor a = random_matrix(rng, 1, 4), b = random_matrix(rng, 1, 4);
    const double v = afm_distance(a, b).item();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 4.0);
    EXPECT_NEAR(v, afm_distance(b, a).item(), 1e-15);
  }
}

TEST(L2Distill, DoubledUnitRowGivesOne) {
  const Tensor z = Tensor::matrix({{0.6, 0.8}});
  EXPECT_NEAR(l2_distill_distance(z, scale(z, 2.0)).item(), 1.0, 1e-15);
  EXPECT_NEAR(afm_distance(z, scale(z, 2.0)).item(), 0.0, 1e-15);
}
