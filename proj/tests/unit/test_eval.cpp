#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fdp/eval/metrics.hpp"
#include "fdp/eval/protocols.hpp"
#include "fdp/eval/ranksum.hpp"

using namespace fdp::eval;

namespace {

ConfusionCounts example() {
  const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const std::vector<std::size_t> preds{0, 0, 0, 1, 0, 0, 1, 1, 1, 1};
  return confusion(preds, labels, 2);
}

fdp::data::Manifest manifest_with(const std::vector<std::string>& subjects) {
  fdp::data::Manifest m;
  m.classes = {"a", "b"};
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    m.rows.push_back({"clip" + std::to_string(i), subjects[i], i % 2, "d", 1});
  }
  return m;
}

}  // namespace

TEST(Confusion, CountsExample) {
  const auto c = example();
  EXPECT_EQ(c.rows(), (std::vector<std::vector<std::size_t>>{{3, 1}, {2, 4}}));
  EXPECT_EQ(c.total(), 10u);
  EXPECT_EQ(c.tp(1), 4u);
  EXPECT_EQ(c.fn(0), 1u);
  EXPECT_EQ(c.fp(0), 2u);
}

TEST(Confusion, PerfectIsDiagonal) {
  const std::vector<std::size_t> y{0, 2, 1, 2, 0};
  const auto c = confusion(y, y, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(c.at(i, j), 0u);
  EXPECT_EQ(c.tp(2), 2u);
}

TEST(Confusion, EmptyAndErrors) {
  const std::vector<std::size_t> none;
  const auto c = confusion(none, none, 3);
  EXPECT_EQ(c.total(), 0u);
  EXPECT_THROW(war(c), fdp::DataError);
  const std::vector<std::size_t> bad{3}, ok{0}, two{0, 1};
  EXPECT_THROW(confusion(bad, ok, 3), fdp::DataError);
  EXPECT_THROW(confusion(two, ok, 3), fdp::UsageError);
}

TEST(Metrics, WorkedExample) {
  const auto c = example();
  EXPECT_DOUBLE_EQ(war(c), 0.7);
  EXPECT_NEAR(uar(c), (0.75 + 4.0 / 6.0) / 2.0, 1e-15);
  EXPECT_NEAR(uar(c), 0.708333, 1e-6);
  EXPECT_NEAR(macro_f1(c), 0.6970, 1e-4);
  const auto f = class_f1(c);
  EXPECT_NEAR(f[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(f[1], 8.0 / 11.0, 1e-12);
  EXPECT_NEAR(f1_score(c, F1Average::kWeighted), (4 * f[0] + 6 * f[1]) / 10, 1e-12);
}

TEST(Metrics, PerfectAndAllWrong) {
  const std::vector<std::size_t> y{0, 1, 1, 0}, wrong{1, 0, 0, 1};
  const auto p = confusion(y, y, 2);
  EXPECT_EQ(war(p), 1.0);
  EXPECT_EQ(uar(p), 1.0);
  EXPECT_EQ(macro_f1(p), 1.0);
  const auto w = confusion(wrong, y, 2);
  EXPECT_EQ(war(w), 0.0);
  EXPECT_EQ(macro_f1(w), 0.0);
}

TEST(Metrics, UarNamesEmptyClass) {
  const std::vector<std::size_t> y{0, 0}, p{0, 1};
  try {
    uar(confusion(p, y, 3));
    FAIL();
  } catch (const fdp::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
  }
}

TEST(Metrics, NeverPredictedClassContributesZeroF1) {
  const std::vector<std::size_t> y{0, 1, 2}, p{0, 1, 1};
  const auto f = class_f1(confusion(p, y, 3));
  EXPECT_EQ(f[2], 0.0);
  EXPECT_NEAR(macro_f1(confusion(p, y, 3)), (1.0 + 2.0 / 3.0) / 3.0, 1e-12);
}

TEST(Metrics, BalancedUarEqualsWar) {
  ConfusionCounts c(3);
  const std::size_t rows[3][3] = {{5, 2, 3}, {1, 8, 1}, {0, 4, 6}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) c.at(i, j) = rows[i][j];
  EXPECT_NEAR(uar(c), war(c), 1e-15);
}

TEST(Metrics, PermutationInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> u(1, 9);
  ConfusionCounts c(4), pc(4);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      c.at(i, j) = u(rng);
      pc.at(perm[i], perm[j]) = c.at(i, j);
    }
  EXPECT_NEAR(uar(c), uar(pc), 1e-15);
  EXPECT_NEAR(war(c), war(pc), 1e-15);
  EXPECT_NEAR(macro_f1(c), macro_f1(pc), 1e-15);
  EXPECT_NEAR(f1_score(c, F1Average::kWeighted), f1_score(pc, F1Average::kWeighted), 1e-15);
}

TEST(Metrics, RandomPredictionsNearChance) {
  std::mt19937_64 rng(6);
  const std::size_t m = 4;
  std::uniform_int_distribution<std::size_t> u(0, m - 1);
  double total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> y, p;
    for (std::size_t i = 0; i < 40; ++i) {
      y.push_back(i % m);
      p.push_back(u(rng));
    }
    total += uar(confusion(p, y, m));
  }
  EXPECT_NEAR(total / 1000, 1.0 / m, 0.05);
}

TEST(Loso, OneFoldPerSubjectSorted) {
  const auto plan = loso_split(manifest_with({"s3", "s1", "s2", "s1", "s3", "s3"}));
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].held_out, "s1");
  EXPECT_EQ(plan[2].held_out, "s3");
  EXPECT_EQ(plan[0].test, (std::vector<std::size_t>{1, 3}));
  std::vector<std::size_t> all;
  for (const auto& f : plan) {
    EXPECT_EQ(f.train.size() + f.test.size(), 6u);
    all.insert(all.end(), f.test.begin(), f.test.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Loso, NoSubjectOnBothSides) {
  const auto m = manifest_with({"a", "b", "c", "a", "b"});
  for (const auto& f : loso_split(m)) {
    for (auto i : f.train) EXPECT_NE(m.rows[i].subject_id, f.held_out);
    for (auto i : f.test) EXPECT_EQ(m.rows[i].subject_id, f.held_out);
  }
}

TEST(Loso, InvariantToRowShuffle) {
  auto m = manifest_with({"a", "b", "c", "a", "b", "c", "d"});
  auto shuffled = m;
  std::mt19937_64 rng(7);
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
  const auto p1 = loso_split(m), p2 = loso_split(shuffled);
  ASSERT_EQ(p1.size(), p2.size());
  for (std::size_t f = 0; f < p1.size(); ++f) {
    EXPECT_EQ(p1[f].held_out, p2[f].held_out);
    std::vector<std::string> a, b;
    for (auto i : p1[f].test) a.push_back(m.rows[i].clip_id);
    for (auto i : p2[f].test) b.push_back(shuffled.rows[i].clip_id);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Loso, SingleSubjectRejected) { EXPECT_THROW(loso_split(manifest_with({"a", "a"})), fdp::DataError); }

TEST(Holdout, SplitsAndRejectsEmptyTest) {
  const auto m = manifest_with({"a", "b", "c", "a"});
  const auto plan = holdout_split(m, {"c"});
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan[0].test, (std::vector<std::size_t>{2}));
  EXPECT_EQ(plan[0].train.size(), 3u);
  EXPECT_THROW(holdout_split(m, {"zz"}), fdp::DataError);
  EXPECT_THROW(holdout_split(m, {"a", "b", "c"}), fdp::DataError);
}

TEST(RankSum, Midranks) {
  const std::vector<double> v{3, 1, 3, 2};
  EXPECT_EQ(midranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(RankSum, ExactOneSidedSmallExample) {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r = wilcoxon_rank_sum(a, b, Sidedness::kLess);
  EXPECT_EQ(r.w, 3.0);
  ASSERT_TRUE(r.p_exact.has_value());
  EXPECT_NEAR(*r.p_exact, 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(*wilcoxon_rank_sum(a, b, Sidedness::kGreater).p_exact, 1.0, 1e-12);
  EXPECT_NEAR(*wilcoxon_rank_sum(a, b, Sidedness::kTwoSided).p_exact, 2.0 / 6.0, 1e-12);
}

TEST(RankSum, IdenticalSamples) {
  const std::vector<double> a{1.5, 2.5, 4.0}, b{1.5, 2.5, 4.0};
  const auto r = wilcoxon_rank_sum(a, b);
  EXPECT_EQ(r.z, 0.0);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_NEAR(*r.p_exact, 1.0, 1e-12);
  const std::vector<double> c{2, 2, 2};
  EXPECT_EQ(wilcoxon_rank_sum(c, c).z, 0.0);
  EXPECT_EQ(wilcoxon_rank_sum(c, c).p, 1.0);
}

TEST(RankSum, NormalAgreesWithExactForSixAndSix) {
  std::mt19937_64 rng(8);
  std::vector<double> pool(12);
  std::iota(pool.begin(), pool.end(), 1.0);
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::span<const double> a(pool.data(), 6), b(pool.data() + 6, 6);
    for (auto side : {Sidedness::kTwoSided, Sidedness::kLess, Sidedness::kGreater}) {
      const auto r = wilcoxon_rank_sum(a, b, side);
      worst = std::max(worst, std::abs(r.p - *r.p_exact));
    }
  }
  EXPECT_LT(worst, 0.03);
}

TEST(RankSum, PDecreasesWithSeparation) {
  std::vector<double> a{1, 2, 3, 4, 5, 6, 7}, b{1, 2, 3, 4, 5, 6, 7};
  double last_p = 2, last_z = -1;
  for (int shift = 0; shift <= 6; ++shift) {  // fully separated at 6
    std::vector<double> bs = b;
    for (auto& v : bs) v += shift + 0.25;
    const auto r = wilcoxon_rank_sum(bs, a);
    EXPECT_GT(r.z, last_z);
    EXPECT_LE(r.p, last_p);
    last_p = r.p;
    last_z = r.z;
  }
}

TEST(RankSum, LargeSamplesSkipEnumeration) {
  std::vector<double> a(10), b(10);
  std::iota(a.begin(), a.end(), 0.0);
  std::iota(b.begin(), b.end(), 5.0);
  EXPECT_FALSE(wilcoxon_rank_sum(a, b).p_exact.has_value());
}

TEST(RankSum, EmptySampleRejected) {
  const std::vector<double> a{1}, none;
  EXPECT_THROW(wilcoxon_rank_sum(a, none), fdp::UsageError);
}
