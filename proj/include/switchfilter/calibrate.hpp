#pragma once
// Parameter determination for the OU-damping surrogates: closed-form naive
// sets derived from the stationary statistics of the switching process, the
// squared-discrepancy objective against the reference prediction, a
// Nelder-Mead minimizer in log coordinates, and dynamic/static calibration
// drivers that track a running filter.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "switchfilter/gaussian.hpp"
#include "switchfilter/reduced.hpp"
#include "switchfilter/ssm.hpp"
#include "switchfilter/switching.hpp"

namespace switchfilter::calibrate {

using bayes::Gaussian1;
using bayes::Gaussian2;
using reduced::ThetaDDSM;
using reduced::ThetaDSM;
using switching::Conditioning;
using switching::SwitchingParams;

struct CalibrationConfig {
  double kappa = 0.0;                    // weight on the mean discrepancy
  double tol = 1e-8;                     // simplex-diameter convergence tolerance
  int max_iter = 500;                    // Nelder-Mead iteration cap
  std::vector<double> continuation_eps;  // optional explicit ladder; empty = automatic
  int averaging_window = 50;             // steps entering the static average
  int quad_nodes = 64;                   // quadrature nodes for both predictions
  int n_terms = 30;                      // series terms for the reference MGFs

  void validate() const {
    if (!(kappa >= 0.0)) throw std::invalid_argument("CalibrationConfig: kappa must be >= 0");
    if (!(tol > 0.0)) throw std::invalid_argument("CalibrationConfig: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("CalibrationConfig: max_iter must be >= 1");
    if (averaging_window < 1)
      throw std::invalid_argument("CalibrationConfig: averaging_window must be >= 1");
    if (quad_nodes < 2) throw std::invalid_argument("CalibrationConfig: need quad_nodes >= 2");
    for (double e : continuation_eps)
      if (!(e > 0.0)) throw std::invalid_argument("CalibrationConfig: ladder entries must be > 0");
  }
};

// Naive DSM parameters: mean and stationary variance of the OU damping matched
// to the switching damping, with the diffusion fixed by the short-correlation
// consistency condition.
inline ThetaDSM theta_naive(const SwitchingParams& params) {
  params.validate();
  const double lp = params.lambda_plus, lm = params.lambda_minus;
  const double dg = params.gamma_minus - params.gamma_plus;
  const double mu = switching::stationary_mode_stats(params).first;
  const double nu = (8.0 / 3.0) * lm * lm * lp * lp / ((lm + lp) * (lp * lp + lm * lm));
  const double sigma2 = (16.0 / 3.0) * lm * lm * lm * lp * lp * lp * dg * dg /
                        ((lm + lp) * (lm + lp) * (lm + lp) * (lp * lp + lm * lm));
  return {mu, nu, std::sqrt(sigma2)};
}

// Naive dDSM parameters for a fixed prediction horizon T: per-mode OU laws
// whose fixed-time mean and variance of the integrated damping match the
// mode-conditioned switching statistics to leading order.
inline ThetaDDSM theta_prime_naive(const SwitchingParams& params, double T) {
  params.validate();
  if (!(T > 0.0)) throw std::invalid_argument("theta_prime_naive: T must be positive");
  const double lp = params.lambda_plus, lm = params.lambda_minus;
  const double gp = params.gamma_plus, gm = params.gamma_minus;
  const double s = lm + lp;
  const double dg2 = (gp - gm) * (gp - gm);
  const double shift = 2.0 * T * lp * lm * dg2 / (s * s);
  ThetaDDSM out;
  out.rho_plus = lm / s;
  out.plus = {shift + gp, (3.0 * lp / (2.0 * T * T)) * s * s / (lp * lm * dg2),
              std::sqrt(3.0 * lp) / T};
  out.minus = {shift + gm, (3.0 * lm / (2.0 * T * T)) * s * s / (lp * lm * dg2),
               std::sqrt(3.0 * lm) / T};
  return out;
}

// Reference-side prediction moments the objective matches against. For DSM
// calibration the conditioning is `weighted` with the stationary mode law; the
// per-mode dDSM variants condition on the respective initial mode.
struct MomentTarget {
  double mean = 0.0;
  double var = 0.0;
};

inline MomentTarget ssm_target(const Gaussian1& u0, const SwitchingParams& params, double obs_T,
                               Conditioning cond, int quad_nodes = 64, int n_terms = 30) {
  const Gaussian1 pred = ssm::predict_u_moments(u0, params, switching::stationary_mode(params),
                                                cond, obs_T, quad_nodes, n_terms);
  return {pred.mean, pred.var};
}

// Squared discrepancy between the surrogate prediction from `filter_state`
// under `theta` and the target moments: kappa |d mean|^2 + |d var|^2.
inline double objective_from_target(const ThetaDSM& theta, const Gaussian2& filter_state,
                                    const MomentTarget& target, double sigma_u, double epsilon,
                                    double obs_T, double kappa, int quad_nodes = 64) {
  const Gaussian2 pred =
      reduced::spekf_predict(filter_state, theta, sigma_u, epsilon, obs_T, quad_nodes);
  const double dm = pred.mean_u - target.mean;
  const double dv = pred.var_u - target.var;
  return kappa * dm * dm + dv * dv;
}

// Full objective, recomputing the reference side (which does not depend on
// theta; drivers precompute it once per step instead).
inline double objective_J(const ThetaDSM& theta, const Gaussian2& filter_state,
                          const SwitchingParams& params, double obs_T, double kappa,
                          int quad_nodes = 64, int n_terms = 30) {
  const MomentTarget target = ssm_target({filter_state.mean_u, filter_state.var_u}, params, obs_T,
                                         Conditioning::weighted, quad_nodes, n_terms);
  return objective_from_target(theta, filter_state, target, params.sigma_u, params.epsilon, obs_T,
                               kappa, quad_nodes);
}

struct MinimizeResult {
  ThetaDSM theta;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

using Point = std::array<double, 3>;  // (mu, log nu, log sigma)

inline Point encode(const ThetaDSM& th) { return {th.mu, std::log(th.nu), std::log(th.sigma)}; }
inline ThetaDSM decode(const Point& x) { return {x[0], std::exp(x[1]), std::exp(x[2])}; }

// Nelder-Mead with the standard reflection/expansion/contraction/shrink
// coefficients (1, 2, 1/2, 1/2), terminating when the vertex spread in the
// infinity norm falls below tol. Objective values that are NaN are treated as
// +infinity so wild trial points are simply rejected.
template <typename F>
MinimizeResult nelder_mead(const ThetaDSM& start, F&& objective, double tol, int max_iter) {
  auto eval = [&](const Point& x) {
    // Wild trial points (overflowing parameters, infeasible moment maps) are
    // rejected by scoring them +infinity rather than aborting the search.
    try {
      const double f = objective(decode(x));
      return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  constexpr int n = 3;
  std::array<Point, n + 1> xs;
  std::array<double, n + 1> fs;
  xs[0] = encode(start);
  for (int i = 0; i < n; ++i) {
    xs[i + 1] = xs[0];
    xs[i + 1][i] += (xs[0][i] != 0.0) ? 0.05 * std::fabs(xs[0][i]) : 0.00025;
  }
  for (int i = 0; i <= n; ++i) fs[i] = eval(xs[i]);

  auto order = [&] {
    for (int i = 1; i <= n; ++i) {  // insertion sort; the simplex is tiny
      Point x = xs[i];
      double f = fs[i];
      int j = i - 1;
      for (; j >= 0 && fs[j] > f; --j) {
        xs[j + 1] = xs[j];
        fs[j + 1] = fs[j];
      }
      xs[j + 1] = x;
      fs[j + 1] = f;
    }
  };
  auto diameter = [&] {
    double d = 0.0;
    for (int i = 1; i <= n; ++i)
      for (int k = 0; k < n; ++k) d = std::max(d, std::fabs(xs[i][k] - xs[0][k]));
    return d;
  };

  order();
  int iter = 0;
  for (; iter < max_iter && diameter() >= tol; ++iter) {
    Point c{};  // centroid of all but the worst vertex
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) c[k] += xs[i][k] / n;
    auto blend = [&](double t) {
      Point x;
      for (int k = 0; k < n; ++k) x[k] = c[k] + t * (c[k] - xs[n][k]);
      return x;
    };
    const Point xr = blend(1.0);
    const double fr = eval(xr);
    bool do_shrink = false;
    if (fr < fs[0]) {
      const Point xe = blend(2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else if (fr < fs[n]) {
      const Point xc = blend(0.5);  // outside contraction
      const double fc = eval(xc);
      if (fc <= fr) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        do_shrink = true;
      }
    } else {
      const Point xcc = blend(-0.5);  // inside contraction
      const double fcc = eval(xcc);
      if (fcc < fs[n]) {
        xs[n] = xcc;
        fs[n] = fcc;
      } else {
        do_shrink = true;
      }
    }
    if (do_shrink) {
      for (int i = 1; i <= n; ++i) {
        for (int k = 0; k < n; ++k) xs[i][k] = xs[0][k] + 0.5 * (xs[i][k] - xs[0][k]);
        fs[i] = eval(xs[i]);
      }
    }
    order();
  }
  return {decode(xs[0]), fs[0], iter, diameter() < tol};
}

}  // namespace detail

// Local minimization of `objective` starting at `start`; positivity of
// (nu, sigma) is built into the log parameterization.
template <typename F>
MinimizeResult minimize_theta(const ThetaDSM& start, F&& objective,
                              const CalibrationConfig& config) {
  config.validate();
  start.validate();
  return detail::nelder_mead(start, std::forward<F>(objective), config.tol, config.max_iter);
}

namespace detail {

inline std::vector<double> continuation_ladder(const CalibrationConfig& config, double epsilon) {
  if (!config.continuation_eps.empty()) {
    std::vector<double> ladder = config.continuation_eps;
    if (ladder.back() != epsilon) ladder.push_back(epsilon);
    return ladder;
  }
  const double e0 = std::min(epsilon, 0.01);
  if (e0 == epsilon) return {epsilon};
  std::vector<double> ladder(5);
  for (int k = 0; k < 5; ++k) ladder[k] = e0 * std::pow(epsilon / e0, k / 4.0);
  ladder[4] = epsilon;
  return ladder;
}

}  // namespace detail

// Dynamic calibration driver for the DSM: call update() with the filter's
// joint posterior after every analysis; it returns the parameters to use from
// the next step on. The first update climbs the epsilon-continuation ladder,
// later ones warm-start from the previous optimum.
// Fallback parameter set whose one-step prediction is finite from any finite
// filter state: the relaxation rate is so large that the kernel forgets its
// gamma marginal within one step (the response weight b ~ eps/nu vanishes),
// leaving pure exponential damping at the requested rate. Applying it also
// re-anchors a runaway gamma marginal at the next prediction.
inline ThetaDSM freeze_theta(const SwitchingParams& params, Conditioning cond) {
  double mu = 0.0;
  switch (cond) {
    case Conditioning::gamma_plus:
      mu = params.gamma_plus;
      break;
    case Conditioning::gamma_minus:
      mu = params.gamma_minus;
      break;
    default:
      mu = switching::stationary_mode_stats(params).first;
      break;
  }
  return {mu, 1e8 * std::max(params.epsilon, 1.0), params.sigma_u};
}

namespace detail {

inline bool finite_prediction(const Gaussian2& state, const ThetaDSM& theta, double sigma_u,
                              double epsilon, double obs_T, int quad_nodes) {
  try {
    const Gaussian2 p = reduced::spekf_predict(state, theta, sigma_u, epsilon, obs_T, quad_nodes);
    return std::isfinite(p.mean_u) && std::isfinite(p.mean_g) && std::isfinite(p.var_u) &&
           std::isfinite(p.var_g) && std::isfinite(p.cov_ug);
  } catch (...) {
    return false;
  }
}

}  // namespace detail

class DynamicCalibrator {
 public:
  DynamicCalibrator(const SwitchingParams& params, double obs_T, CalibrationConfig config,
                    const ThetaDSM& start)
      : params_(params), obs_T_(obs_T), config_(std::move(config)), theta_(start) {
    params_.validate();
    config_.validate();
    theta_.validate();
    if (!(obs_T > 0.0)) throw std::invalid_argument("DynamicCalibrator: obs_T must be positive");
  }
  DynamicCalibrator(const SwitchingParams& params, double obs_T, CalibrationConfig config)
      : DynamicCalibrator(params, obs_T, std::move(config), theta_naive(params)) {}

  ThetaDSM update(const Gaussian2& posterior) {
    const std::vector<double> ladder = history_.empty()
                                           ? detail::continuation_ladder(config_, params_.epsilon)
                                           : std::vector<double>{params_.epsilon};
    MinimizeResult res{theta_, 0.0, 0, true};
    for (double eps : ladder) {
      SwitchingParams level = params_;
      level.epsilon = eps;
      const MomentTarget target =
          ssm_target({posterior.mean_u, posterior.var_u}, level, obs_T_, Conditioning::weighted,
                     config_.quad_nodes, config_.n_terms);
      auto objective = [&](const ThetaDSM& th) {
        return objective_from_target(th, posterior, target, level.sigma_u, eps, obs_T_,
                                     config_.kappa, config_.quad_nodes);
      };
      res = minimize_theta(res.theta, objective, config_);
    }
    // Guarded application: a parameter set is only usable if predicting from
    // the current posterior stays finite. Otherwise keep the previous set, or
    // fall back to the freeze parameters when even that has become unusable
    // (a runaway gamma marginal; the freeze prediction re-anchors it).
    auto usable = [&](const ThetaDSM& th) {
      return detail::finite_prediction(posterior, th, params_.sigma_u, params_.epsilon, obs_T_,
                                       config_.quad_nodes);
    };
    if (!usable(res.theta)) {
      res.theta = usable(theta_) ? theta_ : freeze_theta(params_, Conditioning::weighted);
      res.converged = false;
      ++guard_events_;
    }
    theta_ = res.theta;
    last_ = res;
    history_.push_back(theta_);
    return theta_;
  }

  const ThetaDSM& theta() const { return theta_; }
  const MinimizeResult& last_result() const { return last_; }
  const std::vector<ThetaDSM>& history() const { return history_; }
  int guard_events() const { return guard_events_; }

 private:
  SwitchingParams params_;
  double obs_T_;
  CalibrationConfig config_;
  ThetaDSM theta_;
  MinimizeResult last_{};
  std::vector<ThetaDSM> history_;
  int guard_events_ = 0;
};

// Componentwise arithmetic time average of the first `window` dynamic steps.
inline ThetaDSM static_calibration(const std::vector<ThetaDSM>& dynamic_sequence,
                                   std::size_t window) {
  if (dynamic_sequence.empty())
    throw std::invalid_argument("static_calibration: empty dynamic sequence");
  const std::size_t m = std::min(window, dynamic_sequence.size());
  double mu = 0.0, nu = 0.0, sigma = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mu += dynamic_sequence[i].mu;
    nu += dynamic_sequence[i].nu;
    sigma += dynamic_sequence[i].sigma;
  }
  return {mu / m, nu / m, sigma / m};
}

// Per-mode analogue for the dDSM: each mode's parameters are fit against the
// mode-conditioned reference moments, with the kernel weights held at their
// stationary values.
class DdsmDynamicCalibrator {
 public:
  DdsmDynamicCalibrator(const SwitchingParams& params, double obs_T, CalibrationConfig config,
                        const ThetaDDSM& start)
      : params_(params), obs_T_(obs_T), config_(std::move(config)), theta_(start) {
    params_.validate();
    config_.validate();
    theta_.validate();
    if (!(obs_T > 0.0))
      throw std::invalid_argument("DdsmDynamicCalibrator: obs_T must be positive");
  }
  DdsmDynamicCalibrator(const SwitchingParams& params, double obs_T, CalibrationConfig config)
      : DdsmDynamicCalibrator(params, obs_T, std::move(config),
                              theta_prime_naive(params, obs_T)) {}

  ThetaDDSM update(const Gaussian2& posterior_plus, const Gaussian2& posterior_minus) {
    theta_.plus = update_mode(posterior_plus, Conditioning::gamma_plus, theta_.plus);
    theta_.minus = update_mode(posterior_minus, Conditioning::gamma_minus, theta_.minus);
    history_.push_back(theta_);
    return theta_;
  }

  const ThetaDDSM& theta() const { return theta_; }
  const std::vector<ThetaDDSM>& history() const { return history_; }
  int guard_events() const { return guard_events_; }

  ThetaDDSM static_average(std::size_t window) const {
    if (history_.empty()) throw std::logic_error("DdsmDynamicCalibrator: no updates yet");
    const std::size_t m = std::min(window, history_.size());
    std::vector<ThetaDSM> plus, minus;
    plus.reserve(m);
    minus.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      plus.push_back(history_[i].plus);
      minus.push_back(history_[i].minus);
    }
    return {theta_.rho_plus, static_calibration(plus, m), static_calibration(minus, m)};
  }

 private:
  ThetaDSM update_mode(const Gaussian2& posterior, Conditioning cond, const ThetaDSM& start) {
    const bool first = history_.empty();
    const std::vector<double> ladder = first
                                           ? detail::continuation_ladder(config_, params_.epsilon)
                                           : std::vector<double>{params_.epsilon};
    MinimizeResult res{start, 0.0, 0, true};
    for (double eps : ladder) {
      SwitchingParams level = params_;
      level.epsilon = eps;
      const MomentTarget target = ssm_target({posterior.mean_u, posterior.var_u}, level, obs_T_,
                                             cond, config_.quad_nodes, config_.n_terms);
      auto objective = [&](const ThetaDSM& th) {
        return objective_from_target(th, posterior, target, level.sigma_u, eps, obs_T_,
                                     config_.kappa, config_.quad_nodes);
      };
      res = minimize_theta(res.theta, objective, config_);
    }
    auto usable = [&](const ThetaDSM& th) {
      return detail::finite_prediction(posterior, th, params_.sigma_u, params_.epsilon, obs_T_,
                                       config_.quad_nodes);
    };
    if (!usable(res.theta)) {
      res.theta = usable(start) ? start : freeze_theta(params_, cond);
      ++guard_events_;
    }
    return res.theta;
  }

  SwitchingParams params_;
  double obs_T_;
  CalibrationConfig config_;
  ThetaDDSM theta_;
  std::vector<ThetaDDSM> history_;
  int guard_events_ = 0;
};

}  // namespace switchfilter::calibrate
