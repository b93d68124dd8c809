#pragma once
// Exact simulation of the switching-diffusion truth
//   du = -gamma(t) u dt + sigma_u dB,   gamma switching between gamma+- at
// exponential holding times with rates lambda+-/eps, plus noisy observations
// y_n = u(nT) + N(0, R_n). This module is the Monte Carlo oracle for every
// analytic formula in the repository, so it is event-driven and exact: holding
// times are drawn from their exponential laws and u is advanced between events
// by the exact OU transition kernel -- there is no time-discretization bias.
//
// Reproducibility: each path owns an RNG stream derived from (master seed,
// path index), and aggregation is a deterministic pairwise reduction over
// path-indexed buffers, so results are bit-identical for a fixed seed
// regardless of the number of workers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "switchfilter/gaussian.hpp"
#include "switchfilter/switching.hpp"
#include "switchfilter/threading.hpp"

namespace switchfilter::sim {

using bayes::Gaussian1;
using switching::Mode;
using switching::ModeDistribution;
using switching::SwitchingParams;

// ---------------------------------------------------------------------------
// RNG: xoshiro256++ with SplitMix64 stream seeding and a 128-layer ziggurat
// normal sampler (the standard Marsaglia-Tsang construction).
// ---------------------------------------------------------------------------

namespace detail {

struct ZigguratTables {
  std::uint32_t kn[128];
  double wn[128];
  double fn[128];

  ZigguratTables() {
    double dn = 3.442619855899, tn = dn;
    const double vn = 9.91256303526217e-3, m1 = 2147483648.0;
    const double q = vn / std::exp(-0.5 * dn * dn);
    kn[0] = (std::uint32_t)((dn / q) * m1);
    kn[1] = 0;
    wn[0] = q / m1;
    wn[127] = dn / m1;
    fn[0] = 1.0;
    fn[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      kn[i + 1] = (std::uint32_t)((dn / tn) * m1);
      tn = dn;
      fn[i] = std::exp(-0.5 * dn * dn);
      wn[i] = dn / m1;
    }
  }
};

inline const ZigguratTables& ziggurat() {
  static const ZigguratTables tables;
  return tables;
}

}  // namespace detail

// Per-stream RNG. Streams are decorrelated by running SplitMix64 over a
// combination of the master seed and the stream index before filling the
// xoshiro256++ state.
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t stream) {
    std::uint64_t x = master_seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    for (auto& word : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return r;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return (next() >> 11) * 0x1.0p-53; }

  // Exponential with the given rate; uses log(1-u) so u = 0 is harmless.
  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  // Standard normal via the 128-layer ziggurat.
  double normal() {
    const auto& z = detail::ziggurat();
    constexpr double kTail = 3.442619855899;
    for (;;) {
      std::int32_t hz = (std::int32_t)(std::uint32_t)next();
      std::uint32_t iz = (std::uint32_t)hz & 127u;
      std::uint32_t a = hz < 0 ? (std::uint32_t)(-(std::int64_t)hz) : (std::uint32_t)hz;
      if (a < z.kn[iz]) return hz * z.wn[iz];
      for (;;) {
        if (iz == 0) {
          double x, y;
          do {
            x = -std::log(1.0 - uniform01()) / kTail;
            y = -std::log(1.0 - uniform01());
          } while (y + y < x * x);
          return hz > 0 ? kTail + x : -(kTail + x);
        }
        const double x = hz * z.wn[iz];
        if (z.fn[iz] + uniform01() * (z.fn[iz - 1] - z.fn[iz]) < std::exp(-0.5 * x * x)) return x;
        hz = (std::int32_t)(std::uint32_t)next();
        iz = (std::uint32_t)hz & 127u;
        a = hz < 0 ? (std::uint32_t)(-(std::int64_t)hz) : (std::uint32_t)hz;
        if (a < z.kn[iz]) return hz * z.wn[iz];
      }
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

// ---------------------------------------------------------------------------
// Observation model and truth paths.
// ---------------------------------------------------------------------------

struct ObservationModel {
  double r_n;       // observation noise variance R_n
  double obs_time;  // inter-observation interval T

  void validate() const {
    if (!(r_n > 0.0)) throw std::invalid_argument("ObservationModel: r_n must be positive");
    if (!(obs_time > 0.0))
      throw std::invalid_argument("ObservationModel: observation interval must be positive");
  }
};

struct TruthPath {
  std::vector<double> switch_times;   // strictly increasing event times
  std::vector<Mode> modes;            // mode on each inter-event interval
  std::vector<double> sample_times;   // the requested sample times (as given)
  std::vector<double> u_samples;      // u at each requested sample time
  std::uint64_t seed = 0;
};

namespace detail {

// Exact OU transition over a step of length dt at constant rate gamma:
// u' = e^{-gamma dt} u + N(0, sigma^2 (1 - e^{-2 gamma dt}) / (2 gamma)),
// with the gamma -> 0 limit sigma^2 dt. Valid for either sign of gamma
// (for gamma < 0 both numerator and denominator flip sign).
inline double ou_step_var(double gamma, double sigma, double dt) {
  const double g2 = 2.0 * gamma * dt;
  if (std::fabs(g2) < 2e-8) return sigma * sigma * dt;
  return sigma * sigma * (-std::expm1(-g2)) / (2.0 * gamma);
}

inline double ou_step(double u, double gamma, double sigma, double dt, Rng& rng) {
  if (dt == 0.0) return u;
  const double mean = std::exp(-gamma * dt) * u;
  const double var = ou_step_var(gamma, sigma, dt);
  return var > 0.0 ? mean + std::sqrt(var) * rng.normal() : mean;
}

}  // namespace detail

// Simulate u and the mode forward from (u0, mode0) to time `horizon`,
// recording u at each requested sample time. Sample times may be unsorted;
// results land at their original positions.
inline TruthPath sample_path(const SwitchingParams& params, double u0, Mode mode0, double horizon,
                             const std::vector<double>& sample_times, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw std::invalid_argument("sample_path: horizon must be positive");
  for (double s : sample_times)
    if (!(s >= 0.0) || s > horizon)
      throw std::invalid_argument("sample_path: sample times must lie in [0, horizon]");
  TruthPath path;
  path.seed = seed;
  path.sample_times = sample_times;
  path.u_samples.assign(sample_times.size(), 0.0);
  path.modes.push_back(mode0);

  std::vector<std::size_t> order(sample_times.size());
  std::iota(order.begin(), order.end(), (std::size_t)0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sample_times[a] < sample_times[b]; });

  Rng rng(seed, 0);
  double t = 0.0, u = u0;
  Mode mode = mode0;
  std::size_t si = 0;
  for (;;) {
    const double tau = rng.exponential(params.rate(mode));
    const double t_next = t + tau;
    const double t_stop = std::min(t_next, horizon);
    while (si < order.size() && sample_times[order[si]] <= t_stop) {
      const double s = sample_times[order[si]];
      u = detail::ou_step(u, params.gamma(mode), params.sigma_u, s - t, rng);
      t = s;
      path.u_samples[order[si]] = u;
      ++si;
    }
    if (t_next >= horizon) break;
    u = detail::ou_step(u, params.gamma(mode), params.sigma_u, t_next - t, rng);
    t = t_next;
    path.switch_times.push_back(t);
    mode = switching::other(mode);
    path.modes.push_back(mode);
  }
  return path;
}

// y_n = u(nT) + N(0, R_n), deterministic given the seed (the noise stream is
// derived from (seed, n)). Requires nT to be one of the path's sample times.
inline double observe(const TruthPath& path, const ObservationModel& obs, int n,
                      std::uint64_t seed) {
  obs.validate();
  if (n < 0) throw std::invalid_argument("observe: n must be >= 0");
  const double target = n * obs.obs_time;
  for (std::size_t i = 0; i < path.sample_times.size(); ++i) {
    if (std::fabs(path.sample_times[i] - target) <= 1e-12 * std::max(1.0, target)) {
      Rng rng(seed, 0x0b5e0000ULL + (std::uint64_t)n);
      return path.u_samples[i] + std::sqrt(obs.r_n) * rng.normal();
    }
  }
  throw std::invalid_argument("observe: n * obs_time is not among the path's sample times");
}

// ---------------------------------------------------------------------------
// Monte Carlo moments of u(T).
// ---------------------------------------------------------------------------

struct MomentEstimate {
  double mean = 0.0;
  double var = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
  std::int64_t n_samples = 0;
};

struct McMoments {
  MomentEstimate overall;
  MomentEstimate given_plus;   // conditioned on the initial mode being +
  MomentEstimate given_minus;  // conditioned on the initial mode being -
};

namespace detail {

// Moments of the values selected by `mask` (1 = included), via deterministic
// pairwise reductions. The variance standard error uses the fourth central
// moment: SE(var) ~= sqrt((m4 - var^2) / n).
inline MomentEstimate masked_moments(const std::vector<double>& values,
                                     const std::vector<std::uint8_t>& mask) {
  const std::size_t n = values.size();
  std::vector<double> buf(n), cnt(n);
  for (std::size_t i = 0; i < n; ++i) {
    cnt[i] = mask[i];
    buf[i] = mask[i] ? values[i] : 0.0;
  }
  MomentEstimate est;
  const double count = pairwise_sum(cnt);
  est.n_samples = (std::int64_t)count;
  if (est.n_samples < 2) return est;
  est.mean = pairwise_sum(buf) / count;
  std::vector<double> c2(n), c4(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = mask[i] ? values[i] - est.mean : 0.0;
    c2[i] = d * d;
    c4[i] = d * d * d * d;
  }
  const double m2 = pairwise_sum(c2) / count;
  const double m4 = pairwise_sum(c4) / count;
  est.var = m2 * count / (count - 1.0);
  est.se_mean = std::sqrt(m2 / count);
  est.se_var = std::sqrt(std::max(m4 - m2 * m2, 0.0) / count);
  return est;
}

// u(T) for one path without any bookkeeping (no sample-time machinery).
inline double simulate_u(const SwitchingParams& params, double u0, Mode mode0, double t_final,
                         Rng& rng) {
  double t = 0.0, u = u0;
  Mode mode = mode0;
  for (;;) {
    const double tau = rng.exponential(params.rate(mode));
    if (t + tau >= t_final) return ou_step(u, params.gamma(mode), params.sigma_u, t_final - t, rng);
    u = ou_step(u, params.gamma(mode), params.sigma_u, tau, rng);
    t += tau;
    mode = switching::other(mode);
  }
}

}  // namespace detail

// Monte Carlo estimate of the mean and variance of u(T) -- overall and
// conditioned on the initial mode -- from n_paths exact paths started from
// u0 ~ u0_dist and mode0 ~ mode0_dist (drawn independently).
inline McMoments mc_moments(const SwitchingParams& params, const Gaussian1& u0_dist,
                            const ModeDistribution& mode0_dist, double t_final,
                            std::int64_t n_paths, std::uint64_t seed) {
  if (n_paths < 1000) throw std::invalid_argument("mc_moments: need n_paths >= 1000");
  if (!(t_final > 0.0)) throw std::invalid_argument("mc_moments: t_final must be positive");
  u0_dist.validate();
  mode0_dist.validate();
  std::vector<double> u_final(n_paths);
  std::vector<std::uint8_t> is_plus(n_paths);
  const double u0_sd = std::sqrt(u0_dist.var);
  parallel_for(n_paths, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      Rng rng(seed, (std::uint64_t)i);
      const double u0 = u0_dist.mean + u0_sd * rng.normal();
      const Mode m0 = rng.uniform01() < mode0_dist.p_plus ? Mode::plus : Mode::minus;
      is_plus[i] = m0 == Mode::plus;
      u_final[i] = detail::simulate_u(params, u0, m0, t_final, rng);
    }
  });
  std::vector<std::uint8_t> all(n_paths, 1), is_minus(n_paths);
  for (std::int64_t i = 0; i < n_paths; ++i) is_minus[i] = !is_plus[i];
  return {detail::masked_moments(u_final, all), detail::masked_moments(u_final, is_plus),
          detail::masked_moments(u_final, is_minus)};
}

}  // namespace switchfilter::sim
