#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpn/postprocess.hpp"
#include "oracles.hpp"

using namespace cpn;

namespace {

Proposal proposal(int cls, float corner_score, BBox box = {0, 0, 10, 10}) {
  Proposal p;
  p.box = box;
  p.class_id = cls;
  p.corner_score = corner_score;
  return p;
}

Detection det(BBox box, int cls, float score) { return {box, cls, score, LabelSource::kCornerClass}; }

}  // namespace

TEST(Filter, KeepsScoresAtOrAboveThreshold) {
  const std::vector<float> p{0.1f, 0.2f, 0.9f};
  EXPECT_EQ(filter_by_objectness(p, 0.2f), (std::vector<std::size_t>{1, 2}));
  EXPECT_TRUE(filter_by_objectness({}, 0.2f).empty());
  EXPECT_EQ(filter_by_objectness(p, 0.0f).size(), 3u);
}

TEST(Filter, SurvivingFractionOnCalibratedScores) {
  // Objectness drawn as u^7.2 puts about a fifth of the mass above 0.2, the
  // regime a trained binary head sits in. The filter must keep that fraction.
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<float> p(20000);
  for (float& v : p) v = static_cast<float>(std::pow(u(rng), 7.2));
  const double frac = double(filter_by_objectness(p, kObjectnessThreshold).size()) / double(p.size());
  EXPECT_GT(frac, 0.10);
  EXPECT_LT(frac, 0.30);
}

TEST(Fuse, WorkedValueAndExtremes) {
  EXPECT_FLOAT_EQ(fuse_scores(0.5f, 0.5f), 0.375f);
  EXPECT_FLOAT_EQ(fuse_scores(0.0f, 0.0f), 0.0f);
  EXPECT_FLOAT_EQ(fuse_scores(1.0f, 1.0f), 1.0f);
}

TEST(Fuse, MonotoneInBothArguments) {
  for (float a = 0; a <= 1.0f; a += 0.125f)
    for (float b = 0; b < 1.0f; b += 0.125f) {
      EXPECT_LT(fuse_scores(a, b), fuse_scores(a, b + 0.125f));
      EXPECT_LT(fuse_scores(b, a), fuse_scores(b + 0.125f, a));
    }
}

TEST(AssignLabels, AgreeingClassGivesOneDetection) {
  const std::vector<float> q{0.1f, 0.2f, 0.1f, 0.9f, 0.1f};
  const auto d = assign_labels(proposal(3, 0.5f), q);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].class_id, 3);
  EXPECT_EQ(d[0].source, LabelSource::kCornerClass);
  EXPECT_FLOAT_EQ(d[0].score, fuse_scores(0.5f, 0.9f));
}

TEST(AssignLabels, DisagreeingClassGivesTwoDetections) {
  const std::vector<float> q{0.1f, 0.2f, 0.1f, 0.3f, 0.1f, 0.8f};
  const auto d = assign_labels(proposal(3, 0.5f), q);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].class_id, 3);
  EXPECT_FLOAT_EQ(d[0].score, fuse_scores(0.5f, 0.3f));
  EXPECT_EQ(d[1].class_id, 5);
  EXPECT_EQ(d[1].source, LabelSource::kHeadClass);
  EXPECT_FLOAT_EQ(d[1].score, fuse_scores(0.5f, 0.8f));
  EXPECT_EQ(d[1].box, d[0].box);
}

TEST(AssignLabels, ArgmaxTiesGoToLowestIndex) {
  const std::vector<float> q{0.7f, 0.7f};
  const auto d = assign_labels(proposal(1, 0.5f), q);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[1].class_id, 0);
}

TEST(AssignLabels, SingleClass) {
  const std::vector<float> q{0.4f};
  EXPECT_EQ(assign_labels(proposal(0, 0.5f), q).size(), 1u);
  EXPECT_THROW(assign_labels(proposal(1, 0.5f), q), std::invalid_argument);
}

TEST(SoftNms, IdenticalBoxesDecayByExpMinusTwo) {
  const std::vector<Detection> d{det({0, 0, 10, 10}, 0, 0.9f), det({0, 0, 10, 10}, 0, 0.8f)};
  const auto out = soft_nms(d);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FLOAT_EQ(out[0].score, 0.9f);
  EXPECT_NEAR(out[1].score, 0.8 * std::exp(-2.0), 1e-6);
  EXPECT_NEAR(out[1].score, 0.10827, 1e-5);
}

TEST(SoftNms, ClassesAreIndependent) {
  const std::vector<Detection> d{det({0, 0, 10, 10}, 1, 0.9f), det({0, 0, 10, 10}, 0, 0.8f)};
  const auto out = soft_nms(d);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].class_id, 0);
  EXPECT_FLOAT_EQ(out[0].score, 0.8f);
  EXPECT_FLOAT_EQ(out[1].score, 0.9f);
}

TEST(SoftNms, PrunesBelowThreshold) {
  const std::vector<Detection> d{det({0, 0, 10, 10}, 0, 0.9f), det({0, 0, 10, 10}, 0, 0.005f)};
  EXPECT_EQ(soft_nms(d).size(), 1u);
  EXPECT_TRUE(soft_nms({}).empty());
  EXPECT_THROW(soft_nms(d, 0.0), std::invalid_argument);
}

TEST(SoftNms, DisjointBoxesKeepTheirScores) {
  const std::vector<Detection> d{det({0, 0, 10, 10}, 0, 0.3f), det({20, 20, 30, 30}, 0, 0.6f)};
  const auto out = soft_nms(d);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].score, 0.6f);
  EXPECT_EQ(out[1].score, 0.3f);
}

TEST(SoftNms, MatchesNaiveOracleExactly) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<float> u(0, 1);
  std::uniform_int_distribution<int> cls(0, 2);
  std::uniform_int_distribution<std::size_t> count(0, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> d;
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const float x = u(rng) * 60, y = u(rng) * 60;
      // Coarse scores produce ties that the tie-break has to settle.
      const float s = std::round(u(rng) * 10) / 10;
      d.push_back(det({x, y, x + 5 + u(rng) * 30, y + 5 + u(rng) * 30}, cls(rng), s));
    }
    const auto got = soft_nms(d);
    const auto want = oracle::naive_soft_nms(d, kSoftNmsSigma, kSoftNmsPrune);
    ASSERT_EQ(got.size(), want.size()) << trial;
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].box, want[i].box) << trial;
      ASSERT_EQ(got[i].class_id, want[i].class_id);
      ASSERT_EQ(got[i].score, want[i].score);
    }
  }
}

TEST(TopK, KeepsHighestScoresInOrder) {
  std::vector<Detection> d;
  for (int i = 0; i < 150; ++i) d.push_back(det({0, 0, 1, 1}, 0, float(i % 75) / 75.0f));
  const auto out = top_k_truncate(d);
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i - 1].score, out[i].score);
  EXPECT_EQ(out.back().score, float(25) / 75.0f);
  EXPECT_TRUE(top_k_truncate(d, 0).empty());
  EXPECT_EQ(top_k_truncate(std::span(d).first(3), 100).size(), 3u);
}
