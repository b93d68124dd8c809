#pragma once
// Independent evaluators the test suites check the library against. Everything
// here is deliberately implemented from first principles -- a matrix
// exponential instead of transition-count series, exact-event Monte Carlo,
// brute-force mixture enumeration -- so a defect in a production formula
// cannot cancel out of the comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "switchfilter/gaussian.hpp"
#include "switchfilter/reduced.hpp"
#include "switchfilter/ssm.hpp"
#include "switchfilter/switching.hpp"
#include "switchfilter/threading.hpp"
#include "switchfilter/truth.hpp"

namespace testsupport {

using switchfilter::bayes::Gaussian1;
using switchfilter::bayes::Gaussian2;
using switchfilter::pairwise_sum;
using switchfilter::switching::Conditioning;
using switchfilter::switching::MgfRequest;
using switchfilter::switching::Mode;
using switchfilter::switching::ModeDistribution;
using switchfilter::switching::other;
using switchfilter::switching::pure_mode;
using switchfilter::switching::SwitchingParams;
using switchfilter::switching::transition_probs;

// The benchmark study's switching constants at a given time-scale parameter.
inline SwitchingParams study_params(double epsilon) {
  return {2.27, -0.04, 1.0, 2.0, epsilon, 0.1549};
}

// ---------------------------------------------------------------------------
// Matrix-exponential evaluation of the mode-integral MGF.
//
// The conditioned values m_i(d) = <e^{alpha Gamma_d} | mode_0 = i> solve the
// 2x2 linear ODE m' = M m with m(0) = (1, 1) and
//   M = [[alpha g+ - l+,  l+            ],
//        [l-,             alpha g- - l-]],     l+- = lambda+-/eps,
// so m(d) = exp(d M) (1, 1)^T. With s = tr(M)/2, h the half-difference of the
// diagonal, and q^2 = h^2 + l+ l- (> 0 whenever both intensities are
// positive), the closed two-by-two exponential gives
//   e^{s d} (cosh(q d) + b sinh(q d)/q)
//     = (1 + b/q) e^{(s+q) d}/2 + (1 - b/q) e^{(s-q) d}/2
// per component. The eigenvalue form is essential: s d can reach -10^4 while
// the result stays O(1), so the factored cosh product would evaluate as
// 0 * inf. This evaluator is entire in alpha: no truncation, no validity
// window.
struct ExpmMgf {
  double from_plus = 0.0;
  double from_minus = 0.0;
};

inline ExpmMgf mgf_expm(const SwitchingParams& p, double alpha, double d) {
  const double lp = p.lambda_plus / p.epsilon;
  const double lm = p.lambda_minus / p.epsilon;
  if (!(lp > 0.0) || !(lm > 0.0))
    throw std::invalid_argument("mgf_expm: switching intensities must be positive");
  const double a11 = alpha * p.gamma_plus - lp;
  const double a22 = alpha * p.gamma_minus - lm;
  const double s = 0.5 * (a11 + a22);
  const double h = 0.5 * (a11 - a22);
  const double q2 = h * h + lp * lm;
  const double q = std::sqrt(q2);
  const auto component = [&](double b) {
    if (q * d < 1e-6)
      return std::exp(s * d) * (1.0 + q2 * d * d / 2.0 + b * d * (1.0 + q2 * d * d / 6.0));
    return 0.5 * (1.0 + b / q) * std::exp((s + q) * d) +
           0.5 * (1.0 - b / q) * std::exp((s - q) * d);
  };
  return {component(h + lp), component(lm - h)};
}

inline double mgf_expm_increment(const SwitchingParams& p, const MgfRequest& req,
                                 const ModeDistribution& init) {
  const ModeDistribution start =
      req.conditioning == Conditioning::weighted ? init : pure_mode(req.mode());
  const ModeDistribution at_lo = transition_probs(p, start, req.t_lo);
  const ExpmMgf m = mgf_expm(p, req.alpha, req.duration());
  return at_lo.p_plus * m.from_plus + at_lo.p_minus * m.from_minus;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators.

struct McValue {
  double value = 0.0;
  double se = 0.0;
};

inline McValue mean_and_se(const std::vector<double>& vals) {
  const std::int64_t n = (std::int64_t)vals.size();
  const double mean = pairwise_sum(vals) / (double)n;
  std::vector<double> c2(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double d = vals[i] - mean;
    c2[i] = d * d;
  }
  const double m2 = pairwise_sum(c2) / (double)n;
  return {mean, std::sqrt(m2 / (double)n)};
}

// <e^{alpha (Gamma_{t_hi} - Gamma_{t_lo})}> by exact-event simulation of the
// mode process. Per-path streams make the estimate a pure function of
// (seed, n_paths), independent of the thread decomposition.
inline McValue mc_mgf(const SwitchingParams& p, double alpha, double t_lo, double t_hi,
                      const ModeDistribution& init, std::int64_t n_paths, std::uint64_t seed) {
  std::vector<double> vals((std::size_t)n_paths);
  switchfilter::parallel_for(n_paths, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      switchfilter::sim::Rng rng(seed, (std::uint64_t)i);
      Mode mode = rng.uniform01() < init.p_plus ? Mode::plus : Mode::minus;
      double t = 0.0, integral = 0.0;
      while (t < t_hi) {
        const double hold = rng.exponential(p.rate(mode));
        const double seg_hi = std::min(t + hold, t_hi);
        const double seg_lo = std::max(t, t_lo);
        if (seg_hi > seg_lo) integral += p.gamma(mode) * (seg_hi - seg_lo);
        t += hold;
        mode = other(mode);
      }
      vals[(std::size_t)i] = std::exp(alpha * integral);
    }
  });
  return mean_and_se(vals);
}

// First two joint moments of the coupled diffusion
//   du     = -gamma u dt + sigma_u dW
//   dgamma = -(nu/eps)(gamma - mu) dt + (sigma/sqrt(eps)) dW'
// by Euler-Maruyama from a jointly Gaussian initial condition. Standard
// errors: exact for the means, delta-method for variance and covariance.
struct JointMomentsMc {
  double mean_u = 0.0, mean_g = 0.0;
  double var_u = 0.0, var_g = 0.0;
  double cov_ug = 0.0;
  double se_mean_u = 0.0, se_mean_g = 0.0;
  double se_var_u = 0.0, se_var_g = 0.0;
  double se_cov = 0.0;
};

inline JointMomentsMc em_joint_moments(const Gaussian2& init,
                                       const switchfilter::reduced::ThetaDSM& th, double sigma_u,
                                       double epsilon, double T, double dt, std::int64_t n_paths,
                                       std::uint64_t seed) {
  if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("em_joint_moments: need T, dt > 0");
  const int n_steps = std::max(1, (int)std::llround(T / dt));
  const double h = T / n_steps;
  const double sqh = std::sqrt(h);
  const double drift = th.nu / epsilon;
  const double diff_g = th.sigma / std::sqrt(epsilon);
  // Lower-triangular factor of the initial covariance.
  const double l11 = std::sqrt(std::max(init.var_u, 0.0));
  const double l21 = l11 > 0.0 ? init.cov_ug / l11 : 0.0;
  const double l22 = std::sqrt(std::max(init.var_g - l21 * l21, 0.0));
  std::vector<double> us((std::size_t)n_paths), gs((std::size_t)n_paths);
  switchfilter::parallel_for(n_paths, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      switchfilter::sim::Rng rng(seed, (std::uint64_t)i);
      const double z1 = rng.normal(), z2 = rng.normal();
      double u = init.mean_u + l11 * z1;
      double g = init.mean_g + l21 * z1 + l22 * z2;
      for (int k = 0; k < n_steps; ++k) {
        const double du = -g * u * h + sigma_u * sqh * rng.normal();
        g += -drift * (g - th.mu) * h + diff_g * sqh * rng.normal();
        u += du;
      }
      us[(std::size_t)i] = u;
      gs[(std::size_t)i] = g;
    }
  });
  const McValue mu = mean_and_se(us);
  const McValue mg = mean_and_se(gs);
  std::vector<double> du2(us.size()), dg2(us.size()), dudg(us.size());
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double du = us[i] - mu.value, dg = gs[i] - mg.value;
    du2[i] = du * du;
    dg2[i] = dg * dg;
    dudg[i] = du * dg;
  }
  const McValue vu = mean_and_se(du2);
  const McValue vg = mean_and_se(dg2);
  const McValue cv = mean_and_se(dudg);
  JointMomentsMc out;
  out.mean_u = mu.value;
  out.mean_g = mg.value;
  out.var_u = vu.value;
  out.var_g = vg.value;
  out.cov_ug = cv.value;
  out.se_mean_u = mu.se;
  out.se_mean_g = mg.se;
  out.se_var_u = vu.se;
  out.se_var_g = vg.se;
  out.se_cov = cv.se;
  return out;
}

// ---------------------------------------------------------------------------
// Exact enumeration filter.
//
// The Gaussian-sum scheme without any merging: each kernel is one mode history
// (the mode occupied at every observation time so far); prediction conditions
// the kernel's u belief on its current mode and then branches on the mode at
// the next observation time, so n assimilations produce 2^{n+1} kernels. The
// two children of a kernel share the predicted Gaussian -- the u moments
// condition on the interval's starting mode only -- which is why analysis and
// branching commute. Usable for short runs only; it is the ground truth the
// production merge-and-hand-off policy is measured against.
class EnumerationFilter {
 public:
  EnumerationFilter(const SwitchingParams& params, const Gaussian1& u0,
                    const ModeDistribution& mode0, int quad_nodes = 64, int n_terms = 30)
      : params_(params), quad_(quad_nodes), terms_(n_terms) {
    if (mode0.p_plus > 0.0) kernels_.push_back({std::log(mode0.p_plus), u0, Mode::plus});
    if (mode0.p_minus > 0.0) kernels_.push_back({std::log(mode0.p_minus), u0, Mode::minus});
  }

  void step(double y, const switchfilter::sim::ObservationModel& obs) {
    std::vector<K> next;
    next.reserve(kernels_.size() * 2);
    std::vector<std::pair<Mode, double>> parents;
    parents.reserve(kernels_.size());
    for (const K& k : kernels_) {
      const Conditioning cond =
          k.mode == Mode::plus ? Conditioning::gamma_plus : Conditioning::gamma_minus;
      const Gaussian1 pred = switchfilter::ssm::predict_u_moments(
          k.g, params_, pure_mode(k.mode), cond, obs.obs_time, quad_, terms_);
      const ModeDistribution end = transition_probs(params_, pure_mode(k.mode), obs.obs_time);
      const auto [post, lik] = switchfilter::bayes::kalman_update(pred, y, obs.r_n);
      const double lw = k.log_w + std::log(std::max(lik, 1e-320));
      parents.emplace_back(k.mode, lw);
      if (end.p_plus > 0.0) next.push_back({lw + std::log(end.p_plus), post, Mode::plus});
      if (end.p_minus > 0.0) next.push_back({lw + std::log(end.p_minus), post, Mode::minus});
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (const K& k : next) mx = std::max(mx, k.log_w);
    double z = 0.0;
    for (const K& k : next) z += std::exp(k.log_w - mx);
    const double lz = mx + std::log(z);
    for (K& k : next) k.log_w -= lz;
    kernels_ = std::move(next);
  }

  Gaussian1 posterior() const {
    switchfilter::bayes::GaussianMixture1 mix;
    mix.kernels.reserve(kernels_.size());
    for (const K& k : kernels_)
      mix.kernels.push_back({std::exp(k.log_w), k.g,
                             k.mode == Mode::plus ? switchfilter::bayes::ModeLabel::plus
                                                  : switchfilter::bayes::ModeLabel::minus});
    return switchfilter::bayes::moment_match(mix);
  }

  ModeDistribution mode_belief() const {
    double wp = 0.0, wm = 0.0;
    for (const K& k : kernels_) (k.mode == Mode::plus ? wp : wm) += std::exp(k.log_w);
    return {wp, wm};
  }

  std::size_t kernel_count() const { return kernels_.size(); }

 private:
  struct K {
    double log_w;
    Gaussian1 g;
    Mode mode;  // mode at the current time (start of the next interval)
  };
  SwitchingParams params_;
  int quad_;
  int terms_;
  std::vector<K> kernels_;
};

// ---------------------------------------------------------------------------
// Random draws for the property suites.

inline double uniform(switchfilter::sim::Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform01();
}

inline double log_uniform(switchfilter::sim::Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

// Parameter windows documented for the property suites.
inline SwitchingParams sample_params(switchfilter::sim::Rng& rng) {
  SwitchingParams p;
  p.gamma_plus = uniform(rng, 0.1, 5.0);
  p.gamma_minus = uniform(rng, -3.0, -0.01);
  p.lambda_plus = uniform(rng, 0.2, 5.0);
  p.lambda_minus = uniform(rng, 0.2, 5.0);
  p.epsilon = log_uniform(rng, 0.05, 100.0);
  p.sigma_u = uniform(rng, 0.05, 1.0);
  return p;
}

// A horizon in [0.01, 2].
inline double sample_time(switchfilter::sim::Rng& rng) { return uniform(rng, 0.01, 2.0); }

// An exponent strictly inside the series validity window
//   lambda-/(eps (g- - g+)) < alpha < lambda+/(eps (g+ - g-)),
// staying 10% away from each boundary.
inline double sample_alpha_in_window(const SwitchingParams& p, switchfilter::sim::Rng& rng) {
  const double dg = p.gamma_plus - p.gamma_minus;  // > 0 for valid parameters
  const double lo = -p.lambda_minus / (p.epsilon * dg);
  const double hi = p.lambda_plus / (p.epsilon * dg);
  const double u = uniform(rng, -0.9, 0.9);
  return u < 0.0 ? -u * lo : u * hi;
}

}  // namespace testsupport
