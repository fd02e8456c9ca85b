#include <gtest/gtest.h>

#include <cmath>

#include "sqba/surrogate.hpp"
#include "test_util.hpp"

using namespace sqba;

namespace {

Tensor vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor(std::move(v), Shape{1, 1, n});
}

// Fan assembled by hand so selection behavior is isolated from the
// surrogate's actual gradients.
GradientFan manual_fan(std::vector<double> etas, std::vector<Tensor> gradients) {
  GradientFan fan;
  fan.etas = std::move(etas);
  fan.gradients = std::move(gradients);
  fan.angles.assign(fan.etas.size(), 0.0);
  return fan;
}

}  // namespace

TEST(Surrogate, CosAngleHandValues) {
  EXPECT_DOUBLE_EQ(cos_angle(vec({1.0, 0.0}), vec({0.0, 1.0})), 0.0);
  EXPECT_DOUBLE_EQ(cos_angle(vec({1.0, 2.0}), vec({-1.0, -2.0})), -1.0);
  EXPECT_NEAR(cos_angle(vec({1.0, 0.0}), vec({1.0, 1.0})), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(cos_angle(vec({0.4, -0.7}), vec({0.4, -0.7})), 1.0);
}

TEST(Surrogate, CosAngleRejectsZeroVectorsAndShapeMismatch) {
  EXPECT_THROW(cos_angle(vec({0.0, 0.0}), vec({1.0, 0.0})), std::invalid_argument);
  EXPECT_THROW(cos_angle(vec({1.0, 0.0}), vec({0.0, 0.0})), std::invalid_argument);
  EXPECT_THROW(cos_angle(vec({1.0}), vec({1.0, 0.0})), std::invalid_argument);
}

TEST(Surrogate, TransferDirectionIsSignOfClosedFormGradient) {
  const std::vector<float> w = {0.5f, -1.0f, 2.0f, 0.25f, 1.5f, -0.75f};
  const std::vector<float> b = {0.1f, -0.2f};
  const Network net = make_linear(Shape{1, 1, 3}, 2, w, b);
  const Tensor x = vec({0.3, -0.6, 0.9});
  const Tensor v = transfer_direction(net, x, 0);
  const Tensor expected = sign(loss_grad_input(net, x, 0));
  EXPECT_EQ(v.v, expected.v);
  for (double e : v.v) EXPECT_TRUE(e == -1.0 || e == 0.0 || e == 1.0);
  EXPECT_EQ(transfer_direction(net, x, 0).v, v.v);  // deterministic
}

TEST(Surrogate, TransferDirectionDegenerateThrows) {
  const Network net = make_linear(Shape{1, 1, 2}, 2, std::vector<float>(4, 0.0f),
                                  std::vector<float>(2, 0.0f));
  EXPECT_THROW(transfer_direction(net, vec({0.1, 0.2}), 0), DegenerateDirection);
}

TEST(Surrogate, FanValidatesEtaGrid) {
  const Network net = testutil::hyperplane_net({1.0, -0.5}, 0.1);
  const Tensor x = vec({0.4, 0.6});
  const Tensor v = transfer_direction(net, x, 0);
  EXPECT_THROW(gradient_fan(net, x, v, {0.0, 0.5}, 0), std::invalid_argument);
  EXPECT_THROW(gradient_fan(net, x, v, {0.5, 1.2}, 0), std::invalid_argument);
  EXPECT_THROW(gradient_fan(net, x, v, {0.5, 0.5}, 0), std::invalid_argument);
  EXPECT_THROW(gradient_fan(net, x, v, {0.6, 0.4}, 0), std::invalid_argument);
}

TEST(Surrogate, FanOnLinearModelIsConstant) {
  const std::vector<float> w = {0.5f, -1.0f, 2.0f, 0.25f, 1.5f, -0.75f};
  const Network net = make_linear(Shape{1, 1, 3}, 2, w, {0.0f, 0.0f});
  const Tensor x = vec({0.3, -0.6, 0.9});
  const Tensor v = transfer_direction(net, x, 0);
  const GradientFan fan = gradient_fan(net, x, v, {0.2, 0.4, 0.6, 0.8, 1.0}, 0);
  ASSERT_EQ(fan.etas.size(), 5u);
  EXPECT_TRUE(fan.dropped_etas.empty());
  for (std::size_t i = 0; i < fan.gradients.size(); ++i) {
    EXPECT_NEAR(l2_norm(fan.gradients[i]), 1.0, 1e-12);
    for (std::size_t j = 0; j < fan.gradients[i].v.size(); ++j)
      EXPECT_NEAR(fan.gradients[i].v[j], fan.gradients[0].v[j], 1e-9);
    EXPECT_NEAR(fan.angles[i], fan.angles[0], 1e-9);
  }
}

TEST(Surrogate, FanIsDeterministic) {
  const Network net = make_mlp(Shape{1, 2, 2}, {5}, 3, 77);
  std::mt19937_64 rng(8);
  const Tensor x = testutil::random_image(net.input, rng);
  const Tensor v = transfer_direction(net, x, 1);
  const GradientFan a = gradient_fan(net, x, v, {0.2, 0.6, 1.0}, 1);
  const GradientFan b = gradient_fan(net, x, v, {0.2, 0.6, 1.0}, 1);
  ASSERT_EQ(a.etas, b.etas);
  for (std::size_t i = 0; i < a.gradients.size(); ++i) EXPECT_EQ(a.gradients[i].v, b.gradients[i].v);
  EXPECT_EQ(a.angles, b.angles);
}

TEST(Surrogate, FanDropsEtasWhereGradientDies) {
  // Relu arm z = 0.55 - x feeding both logits: for probes past x = 0.55 the
  // arm is dead and the loss gradient vanishes.
  Network net;
  net.input = Shape{1, 1, 1};
  net.num_classes = 2;
  DenseLayer arm;
  arm.in = 1;
  arm.out = 1;
  arm.w = {-1.0f};
  arm.b = {0.55f};
  net.layers.emplace_back(std::move(arm));
  net.layers.emplace_back(ReluLayer{});
  DenseLayer head;
  head.in = 1;
  head.out = 2;
  head.w = {1.0f, -1.0f};
  head.b = {0.0f, 0.0f};
  net.layers.emplace_back(std::move(head));
  validate(net);

  const Tensor x = vec({0.05});
  const Tensor v = vec({1.0});
  const GradientFan fan = gradient_fan(net, x, v, {0.2, 0.4, 0.6, 0.8}, 0);
  EXPECT_EQ(fan.etas, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(fan.dropped_etas, (std::vector<double>{0.6, 0.8}));
  ASSERT_EQ(fan.gradients.size(), 2u);
  ASSERT_EQ(fan.angles.size(), 2u);
}

TEST(Surrogate, SelectPicksClosestPassingCandidate) {
  // Everything is adversarial to this target, so selection reduces to the
  // argmin over probe distance. The closer gradient points back toward x.
  const Network target = testutil::constant_net(Shape{1, 1, 2}, 2, 1);
  HardLabelOracle oracle(target, 0, 100);
  const Tensor x = vec({0.0, 0.0});
  const Tensor x_t = vec({1.0, 0.0});
  const GradientFan fan =
      manual_fan({0.1, 0.4, 0.8},
                 {vec({-1.0, 0.0}), vec({-1.0, 0.0}), vec({1.0, 0.0})});
  const auto sel = select_gradient(fan, oracle, x, x_t, 0.05);
  ASSERT_TRUE(sel.has_value());
  EXPECT_EQ(sel->v, (std::vector<double>{-1.0, 0.0}));
  // The eta = 0.1 candidate sits below the selection floor: only two probes.
  EXPECT_EQ(oracle.queries_used(), 2);
}

TEST(Surrogate, SelectSkipsFailingCandidates) {
  // Class-1 region is x0 > 0.6: only the positive-direction probe passes,
  // even though the other lands closer to x.
  const Network target = testutil::hyperplane_net({8.0, 0.0}, -4.8);
  HardLabelOracle oracle(target, 0, 100);
  const Tensor x = vec({0.5, 0.5});
  const Tensor x_t = vec({0.55, 0.5});
  const GradientFan fan = manual_fan({0.4, 0.8}, {vec({-1.0, 0.0}), vec({1.0, 0.0})});
  const auto sel = select_gradient(fan, oracle, x, x_t, 0.1);
  ASSERT_TRUE(sel.has_value());
  EXPECT_EQ(sel->v, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(oracle.queries_used(), 2);
}

TEST(Surrogate, SelectReturnsNulloptWhenAllProbesFail) {
  // The target never leaves the true class, so no candidate can pass.
  const Network target = testutil::constant_net(Shape{1, 1, 2}, 2, 0);
  HardLabelOracle oracle(target, 0, 100);
  const GradientFan fan = manual_fan({0.4, 0.8}, {vec({1.0, 0.0}), vec({0.0, 1.0})});
  const auto sel = select_gradient(fan, oracle, vec({0.0, 0.0}), vec({0.5, 0.5}), 0.1);
  EXPECT_FALSE(sel.has_value());
  EXPECT_EQ(oracle.queries_used(), 2);
}

TEST(Surrogate, SelectValidatesDelta) {
  const Network target = testutil::constant_net(Shape{1, 1, 2}, 2, 1);
  HardLabelOracle oracle(target, 0, 100);
  const GradientFan fan = manual_fan({0.4}, {vec({1.0, 0.0})});
  EXPECT_THROW(select_gradient(fan, oracle, vec({0.0, 0.0}), vec({0.5, 0.5}), 0.0),
               std::invalid_argument);
}

TEST(Surrogate, SelectOffersVerifiedProbesToTracker) {
  const Network target = testutil::constant_net(Shape{1, 1, 2}, 2, 1);
  HardLabelOracle oracle(target, 0, 100);
  const Tensor x = vec({1.0, 1.0});
  BestTracker best(x, oracle);
  const GradientFan fan = manual_fan({0.4}, {vec({-1.0, 0.0})});
  const auto sel = select_gradient(fan, oracle, x, vec({2.0, 1.0}), 0.25, &best);
  ASSERT_TRUE(sel.has_value());
  ASSERT_TRUE(best.has());
  EXPECT_NEAR(best.best_rho(), l2_distance(x, vec({1.5, 1.0})) / l2_norm(x), 1e-12);
  ASSERT_EQ(best.events().size(), 1u);
  EXPECT_EQ(best.events()[0].queries, 1);
}

TEST(Surrogate, AngleProfileFlatAtOneForUniformGradient) {
  // Loss gradient proportional to (1, 1) everywhere: sign equals direction,
  // so every angle is exactly 1.
  const Network net = make_linear(Shape{1, 1, 2}, 2, {0.0f, 0.0f, 1.0f, 1.0f},
                                  {0.5f, 0.0f});
  Dataset ds;
  ds.shape = net.input;
  ds.num_classes = 2;
  for (int i = 0; i < 4; ++i) {
    ds.images.push_back(vec({0.1 * i, 0.3}));
    ds.labels.push_back(predict(net, ds.images.back()));
  }
  const auto rows = angle_profile({&net}, ds, {0.2, 0.5, 1.0});
  ASSERT_EQ(rows.size(), 3u);
  for (const AngleRow& row : rows) {
    EXPECT_EQ(row.n, 4);
    EXPECT_NEAR(row.mean_cos_angle, 1.0, 1e-12);
    EXPECT_NEAR(row.stddev, 0.0, 1e-12);
  }
}

TEST(Surrogate, AngleProfileSkipsMisclassifiedExamples) {
  const Network net = testutil::threshold_net(0.5);
  Dataset ds;
  ds.shape = net.input;
  ds.num_classes = 2;
  ds.images.push_back(vec({0.2}));
  ds.labels.push_back(0);  // correct
  ds.images.push_back(vec({0.8}));
  ds.labels.push_back(0);  // misclassified: skipped
  const auto rows = angle_profile({&net}, ds, {0.3});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n, 1);
}

TEST(Surrogate, AngleProfileEmptyGridIsEmpty) {
  const Network net = testutil::threshold_net(0.5);
  Dataset ds;
  ds.shape = net.input;
  ds.num_classes = 2;
  ds.images.push_back(vec({0.2}));
  ds.labels.push_back(0);
  EXPECT_TRUE(angle_profile({&net}, ds, {}).empty());
}
