#include "tbctl/token_bucket.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "tbctl/error.hpp"

namespace tbctl {

namespace {

void check_level(const TokenBucketSpec& spec, int beta) {
  if (!spec.valid_level(beta)) {
    fail(ErrorCode::OutOfRange,
         "bucket level " + std::to_string(beta) + " outside [0, " + std::to_string(spec.b()) + "]");
  }
}

int saturate(const TokenBucketSpec& spec, int beta, int next) {
  if (next < 0) {
    std::ostringstream os;
    os << "transmission from level " << beta << " drains the bucket (" << next << " < 0)";
    fail(ErrorCode::BucketDrained, os.str());
  }
  return std::min(next, spec.b());
}

}  // namespace

TokenBucketSpec::TokenBucketSpec(int b, int c, int g, int r) : b_(b), c_(c), g_(g), r_(r) {
  std::ostringstream os;
  if (g < 1) os << "g must be >= 1 (got " << g << "); ";
  if (c < g) os << "c must be >= g (got c=" << c << ", g=" << g << "); ";
  if (b < c) os << "b must be >= c (got b=" << b << ", c=" << c << "); ";
  if (r < 1) os << "r must be >= 1 (got " << r << "); ";
  if (!os.str().empty()) fail(ErrorCode::InvalidArgument, "token bucket: " + os.str());
}

int bucket_step(const TokenBucketSpec& spec, int beta, bool gamma) {
  check_level(spec, beta);
  return saturate(spec, beta, beta + spec.g() - (gamma ? spec.c() : 0));
}

int bucket_step_direct_link(const TokenBucketSpec& spec, int beta, bool gamma, bool delta) {
  check_level(spec, beta);
  require(!(gamma && delta), ErrorCode::InvalidCombination,
          "gamma and delta cannot both be set in one step");
  return saturate(spec, beta, beta + (delta ? 0 : spec.g()) - (gamma ? spec.c() : 0));
}

InterTransmissionBound inter_transmission_bound(const TokenBucketSpec& spec) {
  InterTransmissionBound out;
  out.q = spec.q();
  out.ratio_not_integer = spec.c() % spec.g() != 0;
  out.qg_minus_c = out.q * spec.g() - spec.c();
  return out;
}

double alpha(double sigma, int beta, int b) {
  require(sigma > 0.0, ErrorCode::OutOfRange, "alpha requires sigma > 0");
  require(beta >= 0 && beta <= b, ErrorCode::OutOfRange, "alpha: level outside [0, b]");
  if (beta == b) return 0.0;
  return sigma * (2.0 * beta + 1.0);
}

int zeta(int beta, int b) {
  require(beta >= 0 && beta <= b, ErrorCode::OutOfRange, "zeta: level outside [0, b]");
  return beta == b ? b : b - 1;
}

double summed_bucket_stage_cost(int q_, int b_, int g_, double psi) {
  const long q = q_;
  const long g = g_;
  const long b = b_;
  require(g >= 1, ErrorCode::PreconditionViolated, "refill g must be positive");
  require(q >= 2, ErrorCode::PreconditionViolated, "summed bucket stage cost needs q >= 2");
  require((q - 1) * g <= b, ErrorCode::PreconditionViolated,
          "summed bucket stage cost needs (q-1) g <= b");
  require(psi > 0.0, ErrorCode::PreconditionViolated, "psi must be positive");
  // (q-1)(q-2)(2q-3) is 6 * sum_{j<q-1} j^2, always divisible by 6.
  const long correction = g * g * ((q - 1) * (q - 2) * (2 * q - 3) / 6);
  return psi * static_cast<double>(q * b * b - correction);
}

double summed_bucket_stage_cost(const TokenBucketSpec& spec, double psi) {
  return summed_bucket_stage_cost(spec.q(), spec.b(), spec.g(), psi);
}

double brim_weight_threshold(const TokenBucketSpec& spec, double psi) {
  return summed_bucket_stage_cost(spec, psi);
}

}  // namespace tbctl
