#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "tdprobe/detect.hpp"

using namespace tdprobe;
using namespace tdprobe::testing;

TEST(Oracle, TcdCsdCombineAgreeOnGrid) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ua(0.01, 0.49);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const double a = ua(rng);
    for (int n_t = 0; n_t <= 30; ++n_t)
      for (int n_l = 0; n_l <= n_t; ++n_l)
        for (int n_s = 1; n_s <= 3; ++n_s, ++checked)
          ASSERT_EQ(tcd(n_t, n_l, n_s, a), oracle_tcd(n_t, n_l, n_s, a));
  }
  EXPECT_GT(checked, 1000);
  for (int b = 1; b <= 8; ++b)
    for (int n = 0; n <= 12; ++n) EXPECT_EQ(csd(n, b), n >= b);
  for (int m = 0; m < 8; ++m)
    EXPECT_EQ(combine_verdict(m & 1, m & 2, m & 4), oracle_combine(m & 1, m & 2, m & 4));
}

TEST(Oracle, DetectSessionAgreesOnRandomLogs) {
  std::mt19937_64 rng(20240601);
  int bad = 0, yes = 0;
  for (int i = 0; i < 2000; ++i) {
    auto log = random_small_log(rng);
    auto got = detect_session(log);
    auto want = oracle_detect(log);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      ASSERT_EQ(got[k].service, want[k].service);
      ASSERT_EQ(got[k].td_detected, want[k].td) << "log " << i << " service " << k;
      if (want[k].td == TdDecision::inconclusive_bad_network) {
        ++bad;
        continue;
      }
      if (want[k].td == TdDecision::yes) ++yes;
      ASSERT_EQ(got[k].n_l, want[k].n_l) << "log " << i;
      ASSERT_EQ(got[k].n_s, want[k].n_s) << "log " << i;
      ASSERT_EQ(got[k].tcd, want[k].tcd) << "log " << i;
      ASSERT_EQ(got[k].csd, want[k].csd) << "log " << i;
    }
  }
  // The generator must exercise every outcome.
  EXPECT_GT(bad, 0);
  EXPECT_GT(yes, 0);
}
