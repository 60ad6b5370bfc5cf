#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpn/losses.hpp"
#include "oracles.hpp"

using namespace cpn;

namespace {

ProposalLabel label(double iou_max, std::vector<double> per_class = {}) {
  return {iou_max, std::move(per_class)};
}

}  // namespace

TEST(LossConstants, OperatingValues) {
  EXPECT_EQ(kIouThreshold, 0.7);
  EXPECT_EQ(kFocalAlpha, 2.0);
  EXPECT_EQ(kFocalBeta, 2.0);
}

TEST(LabelProposals, MaxIouOverallAndPerClass) {
  const std::vector<BBox> props{{0, 0, 10, 10}, {100, 100, 110, 110}};
  const std::vector<GroundTruth> gts{{{0, 0, 10, 10}, 1}, {{0, 0, 10, 5}, 0}};
  const auto l = label_proposals(props, gts, 2);
  EXPECT_DOUBLE_EQ(l[0].iou_max, 1.0);
  EXPECT_DOUBLE_EQ(l[0].class_iou_max[0], 0.5);
  EXPECT_DOUBLE_EQ(l[0].class_iou_max[1], 1.0);
  EXPECT_DOUBLE_EQ(l[1].iou_max, 0.0);
}

TEST(LossProp, SinglePositiveAtOneHalf) {
  const std::vector<double> p{0.5};
  const std::vector<ProposalLabel> l{label(0.8)};
  EXPECT_NEAR(loss_prop(p, l).value, 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(0.25 * std::log(2.0), 0.17329, 1e-5);
}

TEST(LossProp, ConfidentCorrectPredictionTendsToZero) {
  const std::vector<ProposalLabel> l{label(0.9)};
  double prev = 1e9;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const std::vector<double> p{1.0 - eps};
    const double v = loss_prop(p, l).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-9);
}

TEST(LossProp, ThresholdIsInclusiveAndNormalizerClamps) {
  const std::vector<double> p{0.3, 0.3};
  // No positives: normaliser 1, both terms negative.
  const std::vector<ProposalLabel> none{label(0.1), label(0.69)};
  const double neg = -(0.09 * std::log(0.7));
  EXPECT_NEAR(loss_prop(p, none).value, 2 * neg, 1e-12);
  // IoU exactly tau counts as positive.
  const std::vector<ProposalLabel> one{label(0.7), label(0.1)};
  const double pos = -(0.49 * std::log(0.3));
  EXPECT_NEAR(loss_prop(p, one).value, pos + neg, 1e-12);
}

TEST(LossProp, RejectsOutOfRangeScores) {
  const std::vector<ProposalLabel> l{label(0.9)};
  EXPECT_THROW(loss_prop(std::vector<double>{1.0}, l), std::invalid_argument);
  EXPECT_THROW(loss_prop(std::vector<double>{0.0}, l), std::invalid_argument);
  EXPECT_THROW(loss_prop(std::vector<double>{}, {}), std::invalid_argument);
}

TEST(LossClass, WorkedExample) {
  const std::vector<double> q{0.5, 0.5};
  const std::vector<ProposalLabel> l{label(0.9, {0.9, 0.1})};
  EXPECT_NEAR(loss_class(q, 2, l).value, 0.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(0.5 * std::log(2.0), 0.34657, 1e-5);
}

TEST(LossClass, PerfectScoresTendToZero) {
  const std::vector<ProposalLabel> l{label(0.9, {0.9, 0.1}), label(0.2, {0.2, 0.0})};
  const double e = 1e-6;
  const std::vector<double> q{1 - e, e, e, e};
  EXPECT_LT(loss_class(q, 2, l).value, 1e-9);
}

TEST(LossCorner, SinglePositiveAtOneHalf) {
  std::vector<double> pred(16, 1e-12), target(16, 0.0);
  pred[5] = 0.5;
  target[5] = 1.0;
  EXPECT_NEAR(loss_corner_det(pred, target).value, 0.25 * std::log(2.0), 1e-9);
}

TEST(LossCorner, PerfectPredictionTendsToZero) {
  std::vector<double> pred(9, 1e-9), target(9, 0.0);
  pred[4] = 1 - 1e-9;
  target[4] = 1.0;
  EXPECT_LT(loss_corner_det(pred, target).value, 1e-9);
}

TEST(LossCorner, PenaltyReductionNearPeaks) {
  // A negative cell close to a peak (target 0.9) costs (1-0.9)^4 of a far one.
  const std::vector<double> pred{0.5, 0.5};
  const double near = loss_corner_det(pred, std::vector<double>{0.9, 0.0}).value;
  const double far_term = -(0.25 * std::log(0.5));
  EXPECT_NEAR(near, far_term * (std::pow(0.1, 4) + 1.0), 1e-12);
}

TEST(LossCorner, TensorOverloadAgrees) {
  Tensor p({1, 2, 2}, std::vector<float>{0.5f, 0.25f, 0.125f, 0.75f});
  Tensor t({1, 2, 2}, std::vector<float>{1.0f, 0.5f, 0.0f, 0.0f});
  const std::vector<double> pd{0.5, 0.25, 0.125, 0.75}, td{1.0, 0.5, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(loss_corner_det(p, t), loss_corner_det(pd, td).value);
}

TEST(LossOffset, Cases) {
  Tensor a({2, 3, 3}), b({2, 3, 3});
  const std::vector<Cell> mask{{1, 1}};
  EXPECT_EQ(loss_corner_offset(a, a, mask), 0.0);
  b.at(0, 1, 1) = 0.5f;
  b.at(1, 1, 1) = 0.5f;
  EXPECT_DOUBLE_EQ(loss_corner_offset(a, b, mask), 0.25);
  EXPECT_EQ(loss_corner_offset(a, b, {}), 0.0);
  b.at(0, 1, 1) = 3.0f;  // linear branch: 3 - 0.5
  EXPECT_DOUBLE_EQ(loss_corner_offset(a, b, mask), 2.5 + 0.125);
}

TEST(LossTotal, SumsItsParts) {
  EXPECT_EQ(loss_total(0, 0, 0, 0).total, 0.0);
  EXPECT_EQ(loss_total(1, 2, 3, 4).total, 10.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const auto r = loss_total(a, b, c, d);
    EXPECT_EQ(r.total, a + b + c + d);
    EXPECT_EQ(r.l_prop, c);
  }
  EXPECT_THROW(loss_total(std::nan(""), 0, 0, 0), std::domain_error);
}

TEST(LossGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> p(0.1, 0.9), iou(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ProposalLabel> labels;
    std::vector<double> x;
    for (int m = 0; m < 6; ++m) {
      labels.push_back(label(iou(rng), {iou(rng), iou(rng), iou(rng)}));
      x.push_back(p(rng));
    }
    auto f = [&](const std::vector<double>& v) { return loss_prop(v, labels).value; };
    std::vector<double> fd;
    for (std::size_t i = 0; i < x.size(); ++i) fd.push_back(oracle::central_difference(f, x, i, 1e-3));
    EXPECT_LT(oracle::relative_inf_error(loss_prop(x, labels).grad, fd), 1e-4);

    std::vector<double> q;
    for (int k = 0; k < 18; ++k) q.push_back(p(rng));
    auto g = [&](const std::vector<double>& v) { return loss_class(v, 3, labels).value; };
    std::vector<double> fdq;
    for (std::size_t i = 0; i < q.size(); ++i) fdq.push_back(oracle::central_difference(g, q, i, 1e-3));
    EXPECT_LT(oracle::relative_inf_error(loss_class(q, 3, labels).grad, fdq), 1e-4);
  }
}
