#pragma once
// Reference filters for the switching truth itself, with the (u0, gamma0)
// independence assumption restored after every analysis:
//
//   * Gaussian filter: u stays a single Gaussian; the prediction moments come
//     from the unconditioned MGFs of the switching integral,
//       mean = <e^{-Gamma_T}> m,
//       var  = <e^{-2 Gamma_T}>(v + m^2) - <e^{-Gamma_T}>^2 m^2
//              + sigma_u^2 int_0^T <e^{-2(Gamma_T - Gamma_t)}> dt,
//     the time integral by composite trapezoid.
//   * Gaussian-sum filter: the prediction splits on the initial mode, one
//     kernel per mode weighted by the current mode belief, each kernel using
//     the mode-conditioned MGFs in the same template. The analysis updates
//     kernels and weights in parallel; the posterior kernel weights become the
//     next mode belief and the u marginal is re-projected to one Gaussian, so
//     the product-form state the prediction assumes is restored.
//
// The exact filter would carry 2^n kernels after n steps; it exists only as a
// test oracle, never here.

#include <cmath>
#include <stdexcept>
#include <utility>

#include "switchfilter/gaussian.hpp"
#include "switchfilter/switching.hpp"
#include "switchfilter/trace.hpp"
#include "switchfilter/truth.hpp"

namespace switchfilter::ssm {

using bayes::Gaussian1;
using bayes::GaussianMixture1;
using bayes::Kernel1;
using bayes::ModeLabel;
using switching::Conditioning;
using switching::ModeDistribution;
using switching::SwitchingParams;

enum class SsmMode { gaussian, mixture };

struct SsmFilterState {
  GaussianMixture1 u_belief;    // one kernel after every analysis
  ModeDistribution mode_belief;
  int step = 0;

  void validate() const {
    u_belief.validate();
    mode_belief.validate();
  }
};

inline SsmFilterState make_initial_state(const Gaussian1& u0, const ModeDistribution& mode0) {
  SsmFilterState st;
  st.u_belief.kernels = {Kernel1{1.0, u0, ModeLabel::none}};
  st.mode_belief = mode0;
  st.validate();
  return st;
}

// Prediction of a single Gaussian u-belief through the switching dynamics,
// with the MGFs conditioned as requested (weighted = unconditioned under
// `init`; pure = conditioned on the initial mode). Shared by both filter
// flavours and by the calibration targets.
inline Gaussian1 predict_u_moments(const Gaussian1& g, const SwitchingParams& params,
                                   const ModeDistribution& init, Conditioning cond, double T,
                                   int quad_nodes = 64, int n_terms = 30) {
  auto mgf = [&](double alpha, double t_lo) {
    return switching::mgf_increment(params, {alpha, t_lo, T, cond}, init, n_terms).value;
  };
  const double m1 = mgf(-1.0, 0.0);
  const double m2 = mgf(-2.0, 0.0);
  const double h = T / (quad_nodes - 1);
  double acc = 0.0;
  for (int i = 0; i < quad_nodes; ++i) {
    const double t = (i == quad_nodes - 1) ? T : h * i;
    const double f = mgf(-2.0, t);
    acc += (i == 0 || i == quad_nodes - 1) ? 0.5 * f : f;
  }
  const double forcing = params.sigma_u * params.sigma_u * acc * h;
  const double m = g.mean, v = g.var;
  return {m1 * m, m2 * (v + m * m) - m1 * m1 * m * m + forcing};
}

// Gaussian prediction: requires the single-kernel (product-form) state.
inline SsmFilterState ssm_gaussian_predict(const SsmFilterState& state,
                                           const SwitchingParams& params, double T,
                                           int quad_nodes = 64, int n_terms = 30) {
  state.validate();
  if (!(T > 0.0)) throw std::invalid_argument("ssm_gaussian_predict: T must be positive");
  if (quad_nodes < 2) throw std::invalid_argument("ssm_gaussian_predict: need quad_nodes >= 2");
  if (state.u_belief.kernels.size() != 1)
    throw std::invalid_argument("ssm_gaussian_predict: u belief must be a single Gaussian");
  SsmFilterState out = state;
  out.u_belief.kernels[0].g =
      predict_u_moments(state.u_belief.kernels[0].g, params, state.mode_belief,
                        Conditioning::weighted, T, quad_nodes, n_terms);
  out.mode_belief = switching::transition_probs(params, state.mode_belief, T);
  return out;
}

// Gaussian-sum prediction: every incoming kernel splits on the initial mode,
// weighted by the pre-advance mode belief; kernel labels record which mode the
// kernel conditioned on. Zero-weight branches are dropped.
inline SsmFilterState ssm_mixture_predict(const SsmFilterState& state,
                                          const SwitchingParams& params, double T,
                                          int quad_nodes = 64, int n_terms = 30) {
  state.validate();
  if (!(T > 0.0)) throw std::invalid_argument("ssm_mixture_predict: T must be positive");
  if (quad_nodes < 2) throw std::invalid_argument("ssm_mixture_predict: need quad_nodes >= 2");
  SsmFilterState out = state;
  out.u_belief.kernels.clear();
  const struct {
    switching::Mode mode;
    Conditioning cond;
    ModeLabel label;
    double weight;
  } branches[2] = {
      {switching::Mode::plus, Conditioning::gamma_plus, ModeLabel::plus, state.mode_belief.p_plus},
      {switching::Mode::minus, Conditioning::gamma_minus, ModeLabel::minus,
       state.mode_belief.p_minus}};
  for (const auto& br : branches) {
    if (!(br.weight > 0.0)) continue;
    for (const auto& k : state.u_belief.kernels) {
      out.u_belief.kernels.push_back(
          Kernel1{k.weight * br.weight,
                  predict_u_moments(k.g, params, state.mode_belief, br.cond, T, quad_nodes, n_terms),
                  br.label});
    }
  }
  out.u_belief.validate();
  out.mode_belief = switching::transition_probs(params, state.mode_belief, T);
  return out;
}

// One full assimilation cycle: predict, then analyze.
//   gaussian: scalar Kalman update; the mode belief is left unchanged.
//   mixture:  per-kernel update with likelihood reweighting; the posterior
//             kernel weights (summed per label) become the new mode belief,
//             and the u marginal is re-projected to one Gaussian.
inline std::pair<SsmFilterState, FilterTraceRow> ssm_filter_step(
    const SsmFilterState& state, const SwitchingParams& params, const sim::ObservationModel& obs,
    double y, SsmMode mode, int quad_nodes = 64, int n_terms = 30) {
  obs.validate();
  if (!std::isfinite(y)) throw std::invalid_argument("ssm_filter_step: observation not finite");
  SsmFilterState post;
  FilterTraceRow row;
  if (mode == SsmMode::gaussian) {
    SsmFilterState prior = ssm_gaussian_predict(state, params, obs.obs_time, quad_nodes, n_terms);
    const Gaussian1& pg = prior.u_belief.kernels[0].g;
    row.prior_mean = pg.mean;
    row.prior_var = pg.var;
    post = prior;
    post.u_belief.kernels[0].g = bayes::kalman_update(pg, y, obs.r_n).first;
    row.post_mean = post.u_belief.kernels[0].g.mean;
    row.post_var = post.u_belief.kernels[0].g.var;
  } else {
    SsmFilterState prior = ssm_mixture_predict(state, params, obs.obs_time, quad_nodes, n_terms);
    const Gaussian1 pm = bayes::moment_match(prior.u_belief);
    row.prior_mean = pm.mean;
    row.prior_var = pm.var;
    auto [upd, lik] = bayes::mixture_update(prior.u_belief, y, obs.r_n);
    (void)lik;
    // Posterior mode belief from the per-label posterior weights. A dropped
    // zero-weight branch leaves its label with zero mass.
    double w_plus = 0.0, w_minus = 0.0;
    for (const auto& k : upd.kernels) {
      if (k.label == ModeLabel::plus) w_plus += k.weight;
      if (k.label == ModeLabel::minus) w_minus += k.weight;
    }
    post.mode_belief = {w_plus, w_minus};
    const Gaussian1 merged = bayes::moment_match(upd);
    post.u_belief.kernels = {Kernel1{1.0, merged, ModeLabel::none}};
    row.post_mean = merged.mean;
    row.post_var = merged.var;
  }
  post.step = state.step + 1;
  row.step = post.step;
  return {post, row};
}

// Convenience wrapper holding the state across steps.
class SsmFilter {
 public:
  SsmFilter(SwitchingParams params, SsmMode mode, const Gaussian1& u0,
            const ModeDistribution& mode0, int quad_nodes = 64, int n_terms = 30)
      : params_(params), mode_(mode), state_(make_initial_state(u0, mode0)),
        quad_nodes_(quad_nodes), n_terms_(n_terms) {}

  FilterTraceRow step(double y, const sim::ObservationModel& obs) {
    auto [next, row] = ssm_filter_step(state_, params_, obs, y, mode_, quad_nodes_, n_terms_);
    state_ = next;
    return row;
  }

  const SsmFilterState& state() const { return state_; }
  SsmMode mode() const { return mode_; }
  SsmFilterState predict(double T) const {
    return mode_ == SsmMode::gaussian
               ? ssm_gaussian_predict(state_, params_, T, quad_nodes_, n_terms_)
               : ssm_mixture_predict(state_, params_, T, quad_nodes_, n_terms_);
  }

 private:
  SwitchingParams params_;
  SsmMode mode_;
  SsmFilterState state_;
  int quad_nodes_;
  int n_terms_;
};

}  // namespace switchfilter::ssm
