#pragma once

namespace tbctl {

/// Token bucket traffic specification. Levels and parameters are exact
/// integers: size b, cost per transmission c, refill g per step, and the
/// controller period multiplier r.
class TokenBucketSpec {
 public:
  /// Throws InvalidArgument unless g >= 1, c >= g, b >= c and r >= 1.
  TokenBucketSpec(int b, int c, int g, int r = 1);

  int b() const noexcept { return b_; }
  int c() const noexcept { return c_; }
  int g() const noexcept { return g_; }
  int r() const noexcept { return r_; }

  /// Worst-case inter-transmission interval ceil(c/g).
  int q() const noexcept { return (c_ + g_ - 1) / g_; }
  /// Controller activation period r*q.
  int M() const noexcept { return r_ * q(); }
  /// Long-run transmission rate bound g/c.
  double rate_bound() const noexcept { return static_cast<double>(g_) / c_; }

  bool valid_level(int beta) const noexcept { return beta >= 0 && beta <= b_; }

  friend bool operator==(const TokenBucketSpec&, const TokenBucketSpec&) = default;

 private:
  int b_;
  int c_;
  int g_;
  int r_;
};

/// min{beta + g - gamma*c, b}. Throws BucketDrained if the level would go
/// negative and OutOfRange if beta is not a valid level.
int bucket_step(const TokenBucketSpec& spec, int beta, bool gamma);

/// Direct-link variant min{beta + (1-delta)g - gamma*c, b}. Direct-link
/// transmissions neither consume nor earn tokens. Throws InvalidCombination
/// when gamma and delta are both set.
int bucket_step_direct_link(const TokenBucketSpec& spec, int beta, bool gamma, bool delta);

struct InterTransmissionBound {
  int q = 0;
  bool ratio_not_integer = false;  // c/g is not an integer
  int qg_minus_c = 0;
};

InterTransmissionBound inter_transmission_bound(const TokenBucketSpec& spec);

/// Guaranteed per-cycle decrease of the bucket terminal cost:
/// 0 at the brim, sigma*(2*beta + 1) below it.
double alpha(double sigma, int beta, int b);

/// Lower-bound helper for the q-step level increase: b at the brim, b-1 below.
int zeta(int beta, int b);

/// psi * (q b^2 - g^2 (q-1)(q-2)(2q-3) / 6): the summed bucket stage cost
/// over one direct-link cycle started from an empty bucket. Requires q >= 2
/// and (q-1) g <= b.
double summed_bucket_stage_cost(const TokenBucketSpec& spec, double psi);
/// Same closed form for explicit (q, b, g).
double summed_bucket_stage_cost(int q, int b, int g, double psi);

/// Smallest sigma admissible for brim convergence in the direct-link setup.
double brim_weight_threshold(const TokenBucketSpec& spec, double psi);

}  // namespace tbctl
