#pragma once
// The four reduced filters that trade the switching process for something
// cheaper, plus the moment machinery they share:
//
//   * MSM:  gamma replaced by a constant gamma_bar -> scalar Kalman filter.
//   * DSM:  gamma replaced by an OU process (mu, nu, sigma) -> SPEKF-style
//           exact propagation of the first two joint (u, gamma) moments,
//           then a joint Kalman analysis with H = (1, 0).
//   * dMSM: gamma frozen at its initial draw gamma+- -> two permanently
//           labeled Kalman kernels with likelihood-updated weights.
//   * dDSM: per-mode OU parameterizations -> two labeled SPEKF kernels.
//
// The SPEKF moment map is exact for a jointly Gaussian prior: the moments of
// A = u0 exp(-int gamma_hat) follow from the Gaussian exponential-moment
// identity <e^z x> = e^{<z> + Var(z)/2} (<x> + Cov(x, z)), and the forcing
// term <B^2> = sigma_u^2 int <e^{-2(Gamma_T - Gamma_s)}> ds is integrated by
// composite trapezoid with the exact OU marginal at each node.

#include <cmath>
#include <stdexcept>

#include "switchfilter/gaussian.hpp"
#include "switchfilter/trace.hpp"
#include "switchfilter/truth.hpp"

namespace switchfilter::reduced {

using bayes::Gaussian1;
using bayes::Gaussian2;
using bayes::GaussianMixture1;
using bayes::GaussianMixture2;
using bayes::ModeLabel;

enum class ReducedModel { msm, dsm, dmsm, ddsm };

// OU surrogate parameters for the DSM: d gamma = -(nu/eps)(gamma - mu) dt
// + (sigma/sqrt(eps)) dW.
struct ThetaDSM {
  double mu;
  double nu;
  double sigma;

  void validate() const {
    if (!std::isfinite(mu) || !(nu > 0.0) || !(sigma > 0.0))
      throw std::invalid_argument("ThetaDSM: need finite mu, nu > 0, sigma > 0");
  }
  // Stationary variance of the OU surrogate; the epsilon rescaling cancels
  // between the noise and the relaxation rate.
  double stationary_var() const { return sigma * sigma / (2.0 * nu); }
};

// Per-mode OU parameterizations for the dDSM, plus the (frozen) mode weight.
struct ThetaDDSM {
  double rho_plus;
  ThetaDSM plus;
  ThetaDSM minus;

  void validate() const {
    if (!(rho_plus >= 0.0) || !(rho_plus <= 1.0))
      throw std::invalid_argument("ThetaDDSM: rho_plus must be in [0,1]");
    plus.validate();
    minus.validate();
  }
};

struct MsmParams {
  double gamma_bar;  // finite; sign unrestricted

  void validate() const {
    if (!std::isfinite(gamma_bar)) throw std::invalid_argument("MsmParams: gamma_bar not finite");
  }
};

namespace detail {

// Stationary-forcing variance accumulated by OU dynamics at constant rate
// gamma over a step dt (same kernel as the exact simulator's transition).
inline double ou_forcing_var(double gamma, double sigma_u, double dt) {
  const double g2 = 2.0 * gamma * dt;
  if (std::fabs(g2) < 2e-8) return sigma_u * sigma_u * dt;
  return sigma_u * sigma_u * (-std::expm1(-g2)) / (2.0 * gamma);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MSM.
// ---------------------------------------------------------------------------

// Constant-rate OU prediction: mean contracts by e^{-gamma_bar T}, variance
// contracts and accumulates the forcing term.
inline Gaussian1 msm_predict(const Gaussian1& prior, double gamma_bar, double sigma_u, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("msm_predict: T must be positive");
  prior.validate();
  const double decay = std::exp(-gamma_bar * T);
  return {decay * prior.mean,
          decay * decay * prior.var + detail::ou_forcing_var(gamma_bar, sigma_u, T)};
}

// ---------------------------------------------------------------------------
// OU-integral MGF (the DSM analogue of the switching MGF).
// ---------------------------------------------------------------------------

namespace detail {

// b(dt) = (1 - e^{-d dt}) / d, the response of the integral to the state.
inline double ou_b(double d, double dt) {
  if (std::fabs(d * dt) < 1e-8) return dt * (1.0 - 0.5 * d * dt);
  return -std::expm1(-d * dt) / d;
}

// Var of the innovation part of int_0^dt gamma_hat ds for an OU process with
// relaxation rate d and noise variance rate sg2:
//   VB = (sg2 / d^3) psi(x),  psi(x) = (e^{-x} - 1 + x) - (1 - e^{-x})^2 / 2,
// evaluated by series for small x = d dt where the closed form cancels.
inline double ou_integral_innovation_var(double d, double sg2, double dt) {
  const double x = d * dt;
  if (std::fabs(x) < 1e-3) {
    return sg2 * dt * dt * dt *
           (1.0 / 3.0 - x / 4.0 + 7.0 * x * x / 60.0 - x * x * x / 24.0);
  }
  const double em = std::exp(-x);
  const double psi = (em - 1.0 + x) - 0.5 * (1.0 - em) * (1.0 - em);
  return sg2 / (d * d * d) * psi;
}

// OU marginal of gamma_hat advanced by dt from (mean, var).
inline Gaussian1 ou_marginal(const ThetaDSM& th, double epsilon, const Gaussian1& g0, double dt) {
  const double d = th.nu / epsilon;
  const double sg2 = th.sigma * th.sigma / epsilon;
  const double e = std::exp(-d * dt);
  const double var_stat_part = sg2 * (-std::expm1(-2.0 * d * dt)) / (2.0 * d);
  return {th.mu + (g0.mean - th.mu) * e, e * e * g0.var + var_stat_part};
}

}  // namespace detail

// <exp(alpha (Gamma_hat_{t_hi} - Gamma_hat_{t_lo}))> for the OU surrogate,
// with gamma0 the Gaussian marginal of gamma_hat at time 0. The integral
// increment is Gaussian, so the MGF is exp(alpha mean + alpha^2 var / 2) with
//   mean = mu dt + (m(t_lo) - mu) b(dt),
//   var  = b(dt)^2 v(t_lo) + VB(dt),
// the marginal (m, v) advanced to t_lo by the exact OU transition.
inline double ou_integral_mgf(const ThetaDSM& th, const Gaussian1& gamma0, double alpha,
                              double t_lo, double t_hi, double epsilon) {
  th.validate();
  gamma0.validate();
  if (!(t_lo >= 0.0) || !(t_hi >= t_lo))
    throw std::invalid_argument("ou_integral_mgf: need 0 <= t_lo <= t_hi");
  const double dt = t_hi - t_lo;
  if (dt == 0.0) return 1.0;
  const double d = th.nu / epsilon;
  const double sg2 = th.sigma * th.sigma / epsilon;
  const Gaussian1 at_lo = detail::ou_marginal(th, epsilon, gamma0, t_lo);
  const double b = detail::ou_b(d, dt);
  const double mean = th.mu * dt + (at_lo.mean - th.mu) * b;
  const double var = b * b * at_lo.var + detail::ou_integral_innovation_var(d, sg2, dt);
  return std::exp(alpha * mean + 0.5 * alpha * alpha * var);
}

// ---------------------------------------------------------------------------
// DSM / SPEKF moment map.
// ---------------------------------------------------------------------------

// Exact propagation of the joint (u, gamma) moments over one interval T.
// Writing A = u0 e^{-int gamma_hat} and B for the forcing response,
//   <u_T> = <A>,  Var(u_T) = <A^2> + <B^2> - <A>^2,
//   Cov(u_T, gamma_T) = mu(1-e^{-dT})<A> + e^{-dT}<A gamma0> + <A Bdot> -
//                       <A><gamma_T>,
// where the A moments come from the Gaussian exponential-moment identities
// with z = -b gamma0 - (integral innovation) and <B^2> is integrated by
// composite trapezoid on quad_nodes points over [0, T].
inline Gaussian2 spekf_predict(const Gaussian2& prior, const ThetaDSM& th, double sigma_u,
                               double epsilon, double T, int quad_nodes = 64) {
  th.validate();
  prior.validate();
  if (!(T > 0.0)) throw std::invalid_argument("spekf_predict: T must be positive");
  if (quad_nodes < 2) throw std::invalid_argument("spekf_predict: need quad_nodes >= 2");
  const double d = th.nu / epsilon;
  const double sg2 = th.sigma * th.sigma / epsilon;
  const double mu = th.mu;
  const double mu0 = prior.mean_u, mg0 = prior.mean_g;
  const double vu0 = prior.var_u, vg0 = prior.var_g, c0 = prior.cov_ug;

  const double b = detail::ou_b(d, T);
  const double vb = detail::ou_integral_innovation_var(d, sg2, T);
  const double e1 = std::exp(-mu * (T - b));
  const double edT = std::exp(-d * T);

  // Moments of A = u0 e^{-b gamma0} e^{-innovation}.
  const double g1 = std::exp(-b * mg0 + 0.5 * b * b * vg0);
  const double a_mean = e1 * g1 * (mu0 - b * c0) * std::exp(0.5 * vb);
  const double a_g0 = e1 * g1 * (c0 + (mu0 - b * c0) * (mg0 - b * vg0)) * std::exp(0.5 * vb);
  const double g2 = std::exp(-2.0 * b * mg0 + 2.0 * b * b * vg0);
  const double mu_2b = mu0 - 2.0 * b * c0;
  const double a_sq = e1 * e1 * g2 * (vu0 + mu_2b * mu_2b) * std::exp(2.0 * vb);
  // Covariance of A with the gamma_T innovation: Cov(-integral, innovation)
  // = -sg2 b^2 / 2.
  const double a_bdot = a_mean * (-0.5 * sg2 * b * b);

  // gamma_T marginal.
  const double gT_mean = mu + (mg0 - mu) * edT;
  const double gT_var = edT * edT * vg0 + sg2 * (-std::expm1(-2.0 * d * T)) / (2.0 * d);

  // <B^2>: trapezoid over s of the alpha = -2 OU-integral MGF from s to T.
  const Gaussian1 g_marg = prior.gamma_marginal();
  const double h = T / (quad_nodes - 1);
  double acc = 0.0;
  for (int i = 0; i < quad_nodes; ++i) {
    const double s = (i == quad_nodes - 1) ? T : h * i;
    const double f = ou_integral_mgf(th, g_marg, -2.0, s, T, epsilon);
    acc += (i == 0 || i == quad_nodes - 1) ? 0.5 * f : f;
  }
  const double b_sq = sigma_u * sigma_u * acc * h;

  Gaussian2 out{a_mean, gT_mean, a_sq + b_sq - a_mean * a_mean, gT_var,
                mu * (1.0 - edT) * a_mean + edT * a_g0 + a_bdot - a_mean * gT_mean};
  out.psd_repair();
  return out;
}

// ---------------------------------------------------------------------------
// Frozen-mode mixture predictions.
// ---------------------------------------------------------------------------

// dMSM: each labeled kernel propagates with its mode's frozen rate; weights
// are untouched (modes never switch).
inline GaussianMixture1 dmsm_predict(const GaussianMixture1& prior, double gamma_plus,
                                     double gamma_minus, double sigma_u, double T) {
  prior.validate();
  GaussianMixture1 out = prior;
  for (auto& k : out.kernels) {
    if (k.label == ModeLabel::none)
      throw std::invalid_argument("dmsm_predict: kernels must carry mode labels");
    k.g = msm_predict(k.g, k.label == ModeLabel::plus ? gamma_plus : gamma_minus, sigma_u, T);
  }
  return out;
}

// dDSM: per-mode SPEKF prediction with that mode's OU parameterization.
inline GaussianMixture2 ddsm_predict(const GaussianMixture2& prior, const ThetaDDSM& th2,
                                     double sigma_u, double epsilon, double T,
                                     int quad_nodes = 64) {
  th2.validate();
  prior.validate();
  GaussianMixture2 out = prior;
  for (auto& k : out.kernels) {
    if (k.label == ModeLabel::none)
      throw std::invalid_argument("ddsm_predict: kernels must carry mode labels");
    k.g = spekf_predict(k.g, k.label == ModeLabel::plus ? th2.plus : th2.minus, sigma_u, epsilon,
                        T, quad_nodes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filters (predict + analyze per observation).
// ---------------------------------------------------------------------------

class MsmFilter {
 public:
  MsmFilter(MsmParams params, double sigma_u, Gaussian1 init)
      : params_(params), sigma_u_(sigma_u), state_(init) {
    params_.validate();
    state_.validate();
  }

  FilterTraceRow step(double y, const sim::ObservationModel& obs) {
    obs.validate();
    const Gaussian1 prior = msm_predict(state_, params_.gamma_bar, sigma_u_, obs.obs_time);
    state_ = bayes::kalman_update(prior, y, obs.r_n).first;
    ++n_;
    return {n_, prior.mean, prior.var, state_.mean, state_.var};
  }

  const Gaussian1& posterior() const { return state_; }
  Gaussian1 predict(double T) const { return msm_predict(state_, params_.gamma_bar, sigma_u_, T); }

 private:
  MsmParams params_;
  double sigma_u_;
  Gaussian1 state_;
  int n_ = 0;
};

class DsmFilter {
 public:
  DsmFilter(ThetaDSM theta, double sigma_u, double epsilon, Gaussian2 init, int quad_nodes = 64)
      : theta_(theta), sigma_u_(sigma_u), epsilon_(epsilon), state_(init),
        quad_nodes_(quad_nodes) {
    theta_.validate();
    state_.validate();
  }

  FilterTraceRow step(double y, const sim::ObservationModel& obs) {
    obs.validate();
    const Gaussian2 prior = spekf_predict(state_, theta_, sigma_u_, epsilon_, obs.obs_time,
                                          quad_nodes_);
    state_ = bayes::joint_kalman_update(prior, y, obs.r_n).first;
    ++n_;
    return {n_, prior.mean_u, prior.var_u, state_.mean_u, state_.var_u};
  }

  // The surrogate parameters may be replaced between steps (dynamic
  // calibration re-fits them after every analysis).
  void set_theta(const ThetaDSM& th) {
    th.validate();
    theta_ = th;
  }
  const ThetaDSM& theta() const { return theta_; }
  const Gaussian2& posterior() const { return state_; }
  Gaussian2 predict(double T) const {
    return spekf_predict(state_, theta_, sigma_u_, epsilon_, T, quad_nodes_);
  }

 private:
  ThetaDSM theta_;
  double sigma_u_;
  double epsilon_;
  Gaussian2 state_;
  int quad_nodes_;
  int n_ = 0;
};

class DmsmFilter {
 public:
  // Kernels start at the supplied u belief per mode with the given weights.
  DmsmFilter(double gamma_plus, double gamma_minus, double sigma_u,
             const switching::ModeDistribution& weights, Gaussian1 init_plus, Gaussian1 init_minus)
      : gamma_plus_(gamma_plus), gamma_minus_(gamma_minus), sigma_u_(sigma_u) {
    weights.validate();
    state_.kernels = {{weights.p_plus, init_plus, ModeLabel::plus},
                      {weights.p_minus, init_minus, ModeLabel::minus}};
    state_.validate();
  }

  FilterTraceRow step(double y, const sim::ObservationModel& obs) {
    obs.validate();
    const GaussianMixture1 prior =
        dmsm_predict(state_, gamma_plus_, gamma_minus_, sigma_u_, obs.obs_time);
    state_ = bayes::mixture_update(prior, y, obs.r_n).first;
    ++n_;
    const Gaussian1 pm = bayes::moment_match(prior);
    const Gaussian1 qm = bayes::moment_match(state_);
    return {n_, pm.mean, pm.var, qm.mean, qm.var};
  }

  const GaussianMixture1& posterior() const { return state_; }
  GaussianMixture1 predict(double T) const {
    return dmsm_predict(state_, gamma_plus_, gamma_minus_, sigma_u_, T);
  }

 private:
  double gamma_plus_;
  double gamma_minus_;
  double sigma_u_;
  GaussianMixture1 state_;
  int n_ = 0;
};

class DdsmFilter {
 public:
  // Per-mode joint (u, gamma) kernels weighted by theta.rho_plus.
  DdsmFilter(ThetaDDSM theta, double sigma_u, double epsilon, Gaussian2 init_plus,
             Gaussian2 init_minus, int quad_nodes = 64)
      : theta_(theta), sigma_u_(sigma_u), epsilon_(epsilon), quad_nodes_(quad_nodes) {
    theta_.validate();
    state_.kernels = {{theta.rho_plus, init_plus, ModeLabel::plus},
                      {1.0 - theta.rho_plus, init_minus, ModeLabel::minus}};
    state_.validate();
  }

  FilterTraceRow step(double y, const sim::ObservationModel& obs) {
    obs.validate();
    const GaussianMixture2 prior =
        ddsm_predict(state_, theta_, sigma_u_, epsilon_, obs.obs_time, quad_nodes_);
    state_ = bayes::mixture_update(prior, y, obs.r_n).first;
    ++n_;
    const Gaussian2 pm = bayes::moment_match(prior);
    const Gaussian2 qm = bayes::moment_match(state_);
    return {n_, pm.mean_u, pm.var_u, qm.mean_u, qm.var_u};
  }

  // Replace the per-mode OU parameterizations; the kernel weights are part of
  // the filter state and are not touched.
  void set_theta(const ThetaDDSM& th) {
    th.validate();
    theta_.plus = th.plus;
    theta_.minus = th.minus;
  }
  const ThetaDDSM& theta() const { return theta_; }
  const GaussianMixture2& posterior() const { return state_; }
  GaussianMixture2 predict(double T) const {
    return ddsm_predict(state_, theta_, sigma_u_, epsilon_, T, quad_nodes_);
  }

 private:
  ThetaDDSM theta_;
  double sigma_u_;
  double epsilon_;
  GaussianMixture2 state_;
  int quad_nodes_;
  int n_ = 0;
};

}  // namespace switchfilter::reduced
