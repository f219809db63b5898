#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oaxe/metrics.hpp"

using namespace oaxe;

namespace {

SynthConfig modes(int k) {
  SynthConfig c;
  c.num_modes = k;
  c.mode_probs = default_mode_probs(k);
  return c;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.vocab_size = 10;
  c.embed_dim = 8;
  c.ffn_dim = 8;
  c.max_len = 12;
  return c;
}

}  // namespace

TEST(ExactMatch, DirectOutputsScoreOne) {
  const std::vector<Sequence> src = {{1, 2, 3}, {4, 5, 6, 7}};
  EXPECT_EQ(exact_match(src, src, modes(1)), 1.0);
  EXPECT_EQ(exact_match(src, src, modes(5)), 1.0);
}

TEST(ExactMatch, AnyConfiguredModeCounts) {
  const std::vector<Sequence> src = {{1, 2, 3}, {4, 5, 6, 7}};
  const std::vector<Sequence> out = {{1, 2, 3}, {7, 6, 5, 4}};
  EXPECT_EQ(exact_match(out, src, modes(2)), 1.0);
  EXPECT_EQ(exact_match(out, src, modes(1)), 0.5);
}

TEST(ExactMatch, CorruptedTokenScoresZero) {
  const std::vector<Sequence> src = {{1, 2, 3}, {4, 5, 6, 7}};
  const std::vector<Sequence> out = {{1, 2, 4}, {4, 5, 6, 8}};
  EXPECT_EQ(exact_match(out, src, modes(5)), 0.0);
}

TEST(ExactMatch, OrderOfExamplesIrrelevant) {
  std::vector<Sequence> src = {{1, 2, 3}, {4, 5, 6, 7}, {9, 9}};
  std::vector<Sequence> out = {{3, 2, 1}, {4, 5, 6, 0}, {9, 9}};
  const double a = exact_match(out, src, modes(2));
  std::swap(src[0], src[2]);
  std::swap(out[0], out[2]);
  EXPECT_EQ(exact_match(out, src, modes(2)), a);
}

TEST(ExactMatch, EmptyIsUsageError) {
  try {
    exact_match(std::vector<Sequence>{}, std::vector<Sequence>{}, modes(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
  }
}

TEST(Repetition, Examples) {
  EXPECT_EQ(repetition_rate(std::vector<Sequence>{{1, 2, 3}}), 0.0);
  EXPECT_EQ(repetition_rate(std::vector<Sequence>{{1, 1, 2, 2}}), 0.5);
  EXPECT_DOUBLE_EQ(repetition_rate(std::vector<Sequence>{{7, 7, 7, 7, 7}}), 4.0 / 5.0);
  // Repeats never span sequence boundaries.
  EXPECT_EQ(repetition_rate(std::vector<Sequence>{{1, 2}, {2, 3}}), 0.0);
}

TEST(Deduplicate, CollapsesAdjacentRunsOnly) {
  EXPECT_EQ(deduplicate(Sequence{1, 1, 2, 2}), (Sequence{1, 2}));
  EXPECT_EQ(deduplicate(Sequence{1, 2, 1}), (Sequence{1, 2, 1}));
  EXPECT_EQ(deduplicate(Sequence{}), Sequence{});
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> tok(0, 3), len(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    Sequence s(static_cast<std::size_t>(len(rng)));
    for (int& t : s) t = tok(rng);
    const auto d = deduplicate(s);
    EXPECT_EQ(deduplicate(d), d);
    EXPECT_EQ(repetition_rate(std::vector<Sequence>{d}), 0.0);
  }
}

TEST(Ncm, UniformModelGivesLogVocab) {
  auto params = init_parameters<double>(tiny_model());
  params.out_w.setZero();
  const std::vector<Sequence> src = {{1, 2, 3}, {4, 5, 6, 7, 8}};
  const std::vector<Sequence> out = {{0, 0, 0, 0}, {9, 8}};
  EXPECT_NEAR(ncm(params, src, out), std::log(10.0), 1e-12);
}

TEST(Ncm, ConfidentModelGivesZero) {
  auto params = init_parameters<double>(tiny_model());
  params.out_w.setZero();
  params.out_b.setConstant(-1e4);
  params.out_b(0, 3) = 0.0;
  const std::vector<Sequence> src = {{1, 2, 3}};
  EXPECT_NEAR(ncm(params, src, std::vector<Sequence>{{3, 3, 3}}), 0.0, 1e-12);
}

TEST(Ncm, MatchesManualRecomputation) {
  const auto params = init_parameters<double>(tiny_model());
  const std::vector<Sequence> src = {{1, 2, 3, 4}, {5, 6}};
  const std::vector<Sequence> out = {{4, 3, 2}, {6, 5, 0, 9, 1}};
  double total = 0.0, length = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto lp = forward(params, src[i], static_cast<int>(out[i].size()));
    for (std::size_t j = 0; j < out[i].size(); ++j) total -= lp(static_cast<Eigen::Index>(j), out[i][j]);
    length += static_cast<double>(out[i].size());
  }
  EXPECT_NEAR(ncm(params, src, out), (total / 2) / (length / 2), 1e-6);
}

TEST(Ncm, InvariantToDuplicatingCorpus) {
  const auto params = init_parameters<double>(tiny_model());
  std::vector<Sequence> src = {{1, 2, 3, 4}, {5, 6}, {7, 7, 7}};
  std::vector<Sequence> out = {{4, 3, 2}, {6, 5, 0, 9, 1}, {2}};
  const double once = ncm(params, src, out);
  const auto src_once = src, out_once = out;
  src.insert(src.end(), src_once.begin(), src_once.end());
  out.insert(out.end(), out_once.begin(), out_once.end());
  EXPECT_NEAR(ncm(params, src, out), once, 1e-12);
}

TEST(Ncm, RejectsBadOutputs) {
  const auto params = init_parameters<double>(tiny_model());
  const std::vector<Sequence> src = {{1, 2}};
  EXPECT_THROW(ncm(params, src, std::vector<Sequence>{{}}), Error);
  EXPECT_THROW(ncm(params, src, std::vector<Sequence>(1, Sequence(13, 0))), Error);
  EXPECT_THROW(ncm(params, src, std::vector<Sequence>{{10}}), Error);
  EXPECT_THROW(ncm(params, std::vector<Sequence>{}, std::vector<Sequence>{}), Error);
}

TEST(PairwiseSum, DeterministicAndAccurate) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i % 7);
  const double s = pairwise_sum(v);
  EXPECT_EQ(pairwise_sum(v), s);
  EXPECT_NEAR(s, 0.1 * 2997.0, 1e-9);
  EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}

TEST(EvalReport, CsvRow) {
  EvalReport r{"modes5-oaxe", 5, "oaxe", 0.9125, 0.01, 0.25, 1000};
  EXPECT_EQ(to_csv_row(r), "modes5-oaxe,5,oaxe,0.912500,0.010000,0.250000,1000");
  EXPECT_STREQ(kEvalCsvHeader, "run_id,num_modes,loss_kind,exact_match,repetition_rate,ncm,num_examples");
}
