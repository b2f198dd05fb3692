#include "support.hpp"
#include "tbctl/token_bucket.hpp"

using namespace tbctl;

namespace {

// Sum of psi (b^2 - beta_i^2) along one direct-link cycle from an empty
// bucket: beta_0 = 0 (the direct-link step earns nothing), then +g per step.
double brute_force_cycle_cost(int q, int b, int g, double psi) {
  double sum = 0.0;
  long beta = 0;
  for (int i = 0; i < q; ++i) {
    sum += psi * (static_cast<double>(b) * b - static_cast<double>(beta) * beta);
    if (i > 0) beta = std::min<long>(beta + g, b);
  }
  return sum;
}

}  // namespace

TEST(TokenBucketSpec, DerivedQuantities) {
  const TokenBucketSpec s(22, 8, 3);
  EXPECT_EQ(s.q(), 3);
  EXPECT_EQ(s.M(), 3);
  EXPECT_DOUBLE_EQ(s.rate_bound(), 3.0 / 8.0);
  EXPECT_EQ(TokenBucketSpec(22, 8, 3, 2).M(), 6);
}

TEST(TokenBucketSpec, RejectsInvalidParameters) {
  EXPECT_ERROR_CODE(TokenBucketSpec(22, 8, 0), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(TokenBucketSpec(22, 2, 3), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(TokenBucketSpec(7, 8, 3), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(TokenBucketSpec(22, 8, 3, 0), ErrorCode::InvalidArgument);
}

TEST(BucketStep, Examples) {
  const TokenBucketSpec s(22, 8, 3);
  EXPECT_EQ(bucket_step(s, 22, true), 17);
  EXPECT_EQ(bucket_step(s, 22, false), 22);
  EXPECT_ERROR_CODE(bucket_step(s, 4, true), ErrorCode::BucketDrained);
  EXPECT_ERROR_CODE(bucket_step(s, 23, false), ErrorCode::OutOfRange);
  EXPECT_ERROR_CODE(bucket_step(s, -1, false), ErrorCode::OutOfRange);
}

TEST(BucketStepDirectLink, Examples) {
  const TokenBucketSpec s(22, 8, 3);
  EXPECT_EQ(bucket_step_direct_link(s, 7, false, true), 7);
  EXPECT_EQ(bucket_step_direct_link(s, 22, false, false), 22);
  EXPECT_EQ(bucket_step_direct_link(s, 5, true, false), 0);
  EXPECT_ERROR_CODE(bucket_step_direct_link(s, 10, true, true), ErrorCode::InvalidCombination);
  EXPECT_ERROR_CODE(bucket_step_direct_link(s, 4, true, false), ErrorCode::BucketDrained);
}

TEST(BucketStep, OutputAlwaysInRangeOrError) {
  std::mt19937_64 rng(1);
  for (int b = 1; b <= 30; ++b)
    for (int c = 1; c <= b; ++c)
      for (int g = 1; g <= c; ++g) {
        const TokenBucketSpec s(b, c, g);
        for (int beta = 0; beta <= b; ++beta)
          for (bool gamma : {false, true}) {
            try {
              const int next = bucket_step(s, beta, gamma);
              ASSERT_TRUE(s.valid_level(next));
            } catch (const Error& e) {
              ASSERT_EQ(e.code(), ErrorCode::BucketDrained);
              ASSERT_LT(beta + g - c, 0);
            }
          }
      }
}

TEST(BucketStep, RateBoundAlongRandomSequences) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.6);
  const TokenBucketSpec s(22, 8, 3);
  for (int run = 0; run < 200; ++run) {
    const int beta0 = static_cast<int>(rng() % 23);
    int beta = beta0;
    long sent = 0;
    for (int k = 1; k <= 200; ++k) {
      bool gamma = coin(rng);
      if (gamma && beta + s.g() - s.c() < 0) gamma = false;
      beta = bucket_step(s, beta, gamma);
      sent += gamma;
      ASSERT_LE(s.c() * sent, beta0 + static_cast<long>(k) * s.g());
    }
  }
}

TEST(BucketStep, TransmissionGuaranteedAfterQQuietSteps) {
  for (int b = 1; b <= 40; ++b)
    for (int c = 1; c <= b; ++c)
      for (int g = 1; g <= c; ++g) {
        const TokenBucketSpec s(b, c, g);
        for (int beta0 = 0; beta0 <= b; ++beta0) {
          int beta = beta0;
          for (int i = 0; i < s.q(); ++i) beta = bucket_step(s, beta, false);
          ASSERT_NO_THROW(bucket_step(s, beta, true)) << b << " " << c << " " << g << " " << beta0;
        }
      }
}

TEST(InterTransmissionBound, Examples) {
  auto r = inter_transmission_bound(TokenBucketSpec(22, 8, 3));
  EXPECT_EQ(r.q, 3);
  EXPECT_TRUE(r.ratio_not_integer);
  EXPECT_EQ(r.qg_minus_c, 1);
  r = inter_transmission_bound(TokenBucketSpec(22, 8, 4));
  EXPECT_EQ(r.q, 2);
  EXPECT_FALSE(r.ratio_not_integer);
  EXPECT_EQ(r.qg_minus_c, 0);
  r = inter_transmission_bound(TokenBucketSpec(22, 5, 2));
  EXPECT_EQ(r.q, 3);
  EXPECT_TRUE(r.ratio_not_integer);
  EXPECT_EQ(r.qg_minus_c, 1);
}

TEST(InterTransmissionBound, MarginPositiveWheneverNotDivisible) {
  for (int g = 1; g <= 200; ++g)
    for (int c = g; c <= 200; ++c) {
      const auto r = inter_transmission_bound(TokenBucketSpec(c, c, g));
      EXPECT_EQ(r.ratio_not_integer, c % g != 0);
      if (c % g != 0) ASSERT_GE(r.qg_minus_c, 1);
    }
}

TEST(Alpha, Examples) {
  EXPECT_EQ(alpha(1e-6, 22, 22), 0.0);
  EXPECT_DOUBLE_EQ(alpha(1e-6, 0, 22), 1e-6);
  EXPECT_DOUBLE_EQ(alpha(1e-6, 10, 22), 2.1e-5);
  EXPECT_ERROR_CODE(alpha(0.0, 3, 22), ErrorCode::OutOfRange);
  EXPECT_ERROR_CODE(alpha(1e-6, 23, 22), ErrorCode::OutOfRange);
}

TEST(Zeta, Examples) {
  EXPECT_EQ(zeta(22, 22), 22);
  EXPECT_EQ(zeta(0, 22), 21);
  EXPECT_EQ(zeta(21, 22), 21);
  EXPECT_ERROR_CODE(zeta(-1, 22), ErrorCode::OutOfRange);
}

TEST(AlphaZeta, Consistent) {
  const double sigma = 0.37;
  for (int b = 1; b <= 40; ++b)
    for (int beta = 0; beta < b; ++beta) {
      const double lhs = sigma * (std::pow(beta + b - zeta(beta, b), 2) - static_cast<double>(beta) * beta);
      EXPECT_DOUBLE_EQ(lhs, sigma * (2 * beta + 1));
      EXPECT_DOUBLE_EQ(lhs, alpha(sigma, beta, b));
    }
}

TEST(SummedBucketStageCost, Examples) {
  EXPECT_DOUBLE_EQ(summed_bucket_stage_cost(TokenBucketSpec(22, 8, 3), 1.0), 1443.0);
  EXPECT_DOUBLE_EQ(summed_bucket_stage_cost(TokenBucketSpec(10, 7, 2), 1.0), 380.0);
  EXPECT_DOUBLE_EQ(summed_bucket_stage_cost(TokenBucketSpec(9, 5, 3), 1.0), 2.0 * 81);
  EXPECT_DOUBLE_EQ(brute_force_cycle_cost(3, 22, 3, 1.0), 1443.0);
  EXPECT_DOUBLE_EQ(brute_force_cycle_cost(4, 10, 2, 1.0), 380.0);
}

TEST(SummedBucketStageCost, Preconditions) {
  EXPECT_ERROR_CODE(summed_bucket_stage_cost(TokenBucketSpec(22, 3, 3), 1.0), ErrorCode::PreconditionViolated);
  EXPECT_ERROR_CODE(summed_bucket_stage_cost(3, 5, 3, 1.0), ErrorCode::PreconditionViolated);
  EXPECT_ERROR_CODE(summed_bucket_stage_cost(TokenBucketSpec(22, 8, 3), 0.0), ErrorCode::PreconditionViolated);
}

TEST(SummedBucketStageCost, ClosedFormMatchesBruteForceExhaustively) {
  for (int q = 2; q <= 10; ++q)
    for (int g = 1; g <= 10; ++g)
      for (int b = (q - 1) * g; b <= (q - 1) * g + 50; ++b) {
        ASSERT_DOUBLE_EQ(summed_bucket_stage_cost(q, b, g, 1.0), brute_force_cycle_cost(q, b, g, 1.0))
            << "q=" << q << " g=" << g << " b=" << b;
      }
}

TEST(BrimThreshold, Examples) {
  const double psi = 9.93e-10;
  const double t = brim_weight_threshold(TokenBucketSpec(22, 8, 3), psi);
  EXPECT_LE(std::abs(t - 1443 * psi), 1e-15 * 1443 * psi);
  EXPECT_NEAR(t, 1.433e-6, 1e-9);
  EXPECT_DOUBLE_EQ(brim_weight_threshold(TokenBucketSpec(4, 3, 2), 0.5), 16.0);
  EXPECT_LT(brim_weight_threshold(TokenBucketSpec(22, 8, 3), 1e-300), 1e-290);
}
