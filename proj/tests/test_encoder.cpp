#include <gtest/gtest.h>

#include <cmath>

#include "debias_cl/encoder.hpp"

using namespace debias_cl;

TEST(Encoder, DefaultParameterCount) {
  const EncoderConfig cfg;
  // 64*128+128 + 2*(128*128+128) + 128*16+16
  EXPECT_EQ(cfg.parameter_count(), 43408u);
  EXPECT_EQ(init_encoder(cfg).parameter_count(), 43408u);
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig cfg;
  cfg.tap_count = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.hidden_dim = 0;
  EXPECT_THROW(init_encoder(cfg), ConfigError);
}

TEST(Encoder, InitIsDeterministicAndSeedDependent) {
  EncoderConfig cfg;
  cfg.init_seed = 5;
  EXPECT_EQ(init_encoder(cfg), init_encoder(cfg));
  EncoderConfig other = cfg;
  other.init_seed = 6;
  EXPECT_FALSE(init_encoder(cfg) == init_encoder(other));
}

TEST(Encoder, GlorotBoundsAndZeroBias) {
  const EncoderConfig cfg;
  const EncoderParams p = init_encoder(cfg);
  const auto& layers = p.layers();
  ASSERT_EQ(layers.size(), cfg.tap_count + 1);
  for (const DenseLayer& l : layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    double mx = 0.0;
    for (double w : l.weight.data()) mx = std::max(mx, std::abs(w));
    EXPECT_LE(mx, limit);
    EXPECT_GT(mx, 0.9 * limit);
    for (double b : l.bias.data()) EXPECT_EQ(b, 0.0);
  }
}

TEST(Encoder, ForwardShapesAndTaps) {
  EncoderConfig cfg;
  cfg.input_dim = 7;
  cfg.hidden_dim = 9;
  cfg.tap_count = 3;
  cfg.output_dim = 4;
  const EncoderParams p = init_encoder(cfg);
  const ForwardTrace<Tensor> tr = forward(p, Tensor::matrix(5, 7, 0.3));
  EXPECT_EQ(tr.output.shape(), (Shape{5, 4}));
  ASSERT_EQ(tr.intermediates.size(), 3u);
  for (const Tensor& h : tr.intermediates) {
    EXPECT_EQ(h.shape(), (Shape{5, 9}));
    for (double v : h.data()) EXPECT_LE(std::abs(v), 1.0);  // post-tanh
  }
  EXPECT_THROW(forward(p, Tensor::matrix(5, 6)), DimensionError);
}

TEST(Encoder, TapedForwardMatchesValueForward) {
  EncoderConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dim = 8;
  cfg.output_dim = 3;
  cfg.activation = Activation::Relu;
  const EncoderParams p = init_encoder(cfg);
  Tensor x = Tensor::matrix(4, 6);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = std::sin(static_cast<double>(i));
  Tape tape;
  const ForwardTrace<Var> taped = forward(bind(tape, p), tape.constant(x));
  const ForwardTrace<Tensor> plain = forward(p, x);
  EXPECT_EQ(taped.output.value(), plain.output);
  for (std::size_t i = 0; i < plain.intermediates.size(); ++i)
    EXPECT_EQ(taped.intermediates[i].value(), plain.intermediates[i]);
}

TEST(Encoder, SnapshotIsIndependentOfLaterUpdates) {
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dim = 4;
  cfg.output_dim = 2;
  EncoderParams p = init_encoder(cfg);
  const Snapshot snap = Snapshot::take(p, 3);
  const EncoderParams before = p;
  (*p.parameters()[0])[0] += 1.0;
  EXPECT_EQ(snap.params(), before);
  EXPECT_EQ(snap.step(), 3u);
  EXPECT_FALSE(snap.empty());
  EXPECT_TRUE(Snapshot{}.empty());
}

TEST(Encoder, FlattenOrderIsWeightThenBiasPerLayer) {
  EncoderConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 3;
  cfg.tap_count = 1;
  cfg.output_dim = 2;
  const EncoderParams p = init_encoder(cfg);
  const std::vector<double> flat = p.flatten();
  ASSERT_EQ(flat.size(), p.parameter_count());
  EXPECT_EQ(flat[0], p.layers()[0].weight[0]);
  EXPECT_EQ(flat[6], 0.0);  // first bias entry follows the 2x3 weight
  EXPECT_EQ(flat[9], p.layers()[1].weight[0]);
}

TEST(Encoder, EmbeddingProviderRowsAreUnit) {
  const Tensor e = embedding_provider(9, 20, 16);
  const Tensor n = row_norms(e);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(n[i], 1.0, 1e-12);
  EXPECT_EQ(e, embedding_provider(9, 20, 16));
}
