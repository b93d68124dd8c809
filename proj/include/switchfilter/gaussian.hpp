#pragma once
// Gaussian and Gaussian-mixture state representations with the Bayesian
// analysis machinery shared by every filter in this library:
//
//   * scalar Kalman analysis (u observed directly),
//   * joint 2x2 Kalman analysis for the (u, gamma) pair with H = (1, 0),
//   * mixture analysis: parallel per-kernel Kalman update plus likelihood
//     reweighting (log-space, since widely separated kernels underflow),
//   * moment-matched reduction of a mixture to a single Gaussian, and the
//     repeated pairwise-merge reduction to at most K kernels,
//   * L1 distance between densities on a trapezoid grid.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace switchfilter::bayes {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double normal_log_pdf(double x, double mean, double var) {
  if (!(var > 0.0)) throw std::invalid_argument("normal_log_pdf: variance must be positive");
  const double z = x - mean;
  return -0.5 * (std::log(kTwoPi * var) + z * z / var);
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(normal_log_pdf(x, mean, var));
}

// Scalar Gaussian belief over u.
struct Gaussian1 {
  double mean;
  double var;

  void validate() const {
    if (!std::isfinite(mean) || !std::isfinite(var) || var < 0.0)
      throw std::invalid_argument("Gaussian1: mean/variance must be finite, variance >= 0");
  }
  double pdf(double x) const { return normal_pdf(x, mean, var); }
};

// Joint Gaussian belief over (u, gamma).
struct Gaussian2 {
  double mean_u;
  double mean_g;
  double var_u;
  double var_g;
  double cov_ug;

  // Smallest eigenvalue of the 2x2 covariance.
  double min_eigenvalue() const {
    const double h = 0.5 * (var_u + var_g);
    const double d = 0.5 * (var_u - var_g);
    return h - std::sqrt(d * d + cov_ug * cov_ug);
  }

  void validate() const {
    if (!std::isfinite(mean_u) || !std::isfinite(mean_g) || !std::isfinite(var_u) ||
        !std::isfinite(var_g) || !std::isfinite(cov_ug))
      throw std::invalid_argument("Gaussian2: fields must be finite");
    const double tol = 1e-12 * std::max(var_u + var_g, 0.0);
    if (min_eigenvalue() < -tol)
      throw std::invalid_argument("Gaussian2: covariance not positive semidefinite");
  }

  // Marginals with diagonal entries clamped at zero: a variance negative by a
  // sub-ulp amount (invisible to the eigenvalue arithmetic below) is a
  // numerical zero, not a valid Gaussian variance.
  Gaussian1 u_marginal() const { return {mean_u, std::max(var_u, 0.0)}; }
  Gaussian1 gamma_marginal() const { return {mean_g, std::max(var_g, 0.0)}; }

  // Clip negative eigenvalues (tolerated up to 1e-12 * trace of numerical
  // asymmetry from quadrature) to zero, reconstructing from the eigensystem.
  void psd_repair() {
    // Diagonal entries can go negative by amounts far below the ulp of the
    // trace, where h, d, r below all round to the same value and the
    // eigenvalue test cannot detect the defect; resolve those to zero first.
    const double scale = std::fabs(var_u) + std::fabs(var_g);
    if (var_u < 0.0 && -var_u <= 1e-12 * scale) var_u = 0.0;
    if (var_g < 0.0 && -var_g <= 1e-12 * scale) var_g = 0.0;
    const double h = 0.5 * (var_u + var_g);
    const double d = 0.5 * (var_u - var_g);
    const double r = std::sqrt(d * d + cov_ug * cov_ug);
    const double lo = h - r;
    if (lo >= 0.0) return;
    const double hi_c = std::max(h + r, 0.0);
    // Eigenvector for the larger eigenvalue; degenerate r = 0 means the matrix
    // is a negative multiple of the identity, clipped to zero wholesale.
    if (r == 0.0) {
      var_u = var_g = cov_ug = 0.0;
      return;
    }
    double vx, vy;
    if (d >= 0.0) {
      vx = d + r;
      vy = cov_ug;
    } else {
      vx = cov_ug;
      vy = r - d;
    }
    const double nrm = std::hypot(vx, vy);
    if (nrm == 0.0) {
      var_u = std::max(var_u, 0.0);
      var_g = std::max(var_g, 0.0);
      return;
    }
    vx /= nrm;
    vy /= nrm;
    var_u = hi_c * vx * vx;
    var_g = hi_c * vy * vy;
    cov_ug = hi_c * vx * vy;
  }
};

// Kernel labels let the frozen-mode filters keep their two kernels attached to
// the mode they condition on; plain mixtures use `none`.
enum class ModeLabel { plus, minus, none };

struct Kernel1 {
  double weight;
  Gaussian1 g;
  ModeLabel label = ModeLabel::none;
};

struct Kernel2 {
  double weight;
  Gaussian2 g;
  ModeLabel label = ModeLabel::none;
};

namespace detail {

template <class KernelT>
void validate_kernels(const std::vector<KernelT>& ks) {
  if (ks.empty()) throw std::invalid_argument("GaussianMixture: kernel count must be >= 1");
  double sum = 0.0;
  for (const auto& k : ks) {
    if (!(k.weight >= 0.0)) throw std::invalid_argument("GaussianMixture: weights must be >= 0");
    k.g.validate();
    sum += k.weight;
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
}

template <class KernelT>
void normalize_kernels(std::vector<KernelT>& ks) {
  double sum = 0.0;
  for (const auto& k : ks) sum += k.weight;
  if (!(sum > 0.0)) throw std::invalid_argument("GaussianMixture: total weight must be positive");
  for (auto& k : ks) k.weight /= sum;
}

}  // namespace detail

struct GaussianMixture1 {
  std::vector<Kernel1> kernels;

  void validate() const { detail::validate_kernels(kernels); }
  void normalize() { detail::normalize_kernels(kernels); }

  double mean() const {
    double m = 0.0;
    for (const auto& k : kernels) m += k.weight * k.g.mean;
    return m;
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (const auto& k : kernels) s += k.weight * (k.g.var + k.g.mean * k.g.mean);
    return s - m * m;
  }
  double pdf(double x) const {
    double p = 0.0;
    for (const auto& k : kernels)
      if (k.weight > 0.0) p += k.weight * k.g.pdf(x);
    return p;
  }
};

struct GaussianMixture2 {
  std::vector<Kernel2> kernels;

  void validate() const { detail::validate_kernels(kernels); }
  void normalize() { detail::normalize_kernels(kernels); }
};

// ---------------------------------------------------------------------------
// Kalman analysis.
// ---------------------------------------------------------------------------

// Scalar analysis: returns the posterior and the marginal likelihood of y,
// i.e. the Normal density of y under the prior-predictive N(mean, var + R).
inline std::pair<Gaussian1, double> kalman_update(const Gaussian1& prior, double y, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("kalman_update: R must be positive");
  prior.validate();
  const double s = prior.var + R;
  const double gain = prior.var / s;
  Gaussian1 post{prior.mean + gain * (y - prior.mean), prior.var * (1.0 - gain)};
  return {post, normal_pdf(y, prior.mean, s)};
}

// Joint analysis with observation operator H = (1, 0): u is observed, gamma is
// updated only through the cross-covariance.
inline std::pair<Gaussian2, double> joint_kalman_update(const Gaussian2& prior, double y,
                                                        double R) {
  if (!(R > 0.0)) throw std::invalid_argument("joint_kalman_update: R must be positive");
  prior.validate();
  const double s = prior.var_u + R;
  const double ku = prior.var_u / s;
  const double kg = prior.cov_ug / s;
  const double innov = y - prior.mean_u;
  Gaussian2 post{prior.mean_u + ku * innov,       prior.mean_g + kg * innov,
                 prior.var_u - prior.var_u * ku,  prior.var_g - prior.cov_ug * kg,
                 prior.cov_ug - prior.var_u * kg};
  post.psd_repair();
  return {post, normal_pdf(y, prior.mean_u, s)};
}

namespace detail {

// Shared mixture-analysis skeleton: per-kernel analysis plus log-space
// likelihood reweighting. If every kernel's likelihood underflows to zero
// (log-likelihood -inf), the reweighting is uniform and a warning is logged.
template <class MixtureT, class UpdateOne>
std::pair<MixtureT, double> mixture_update_impl(const MixtureT& prior, UpdateOne&& update_one) {
  prior.validate();
  MixtureT post = prior;
  std::vector<double> log_lik(prior.kernels.size());
  double max_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prior.kernels.size(); ++i) {
    double ll;
    post.kernels[i].g = update_one(prior.kernels[i].g, ll);
    log_lik[i] = ll;
    if (prior.kernels[i].weight > 0.0) max_ll = std::max(max_ll, ll);
  }
  if (!std::isfinite(max_ll)) {
    std::fprintf(stderr,
                 "mixture_update: all kernel likelihoods underflowed; reweighting uniformly\n");
    return {post, 0.0};
  }
  double total = 0.0;
  for (std::size_t i = 0; i < prior.kernels.size(); ++i) {
    const double w = prior.kernels[i].weight * std::exp(log_lik[i] - max_ll);
    post.kernels[i].weight = w;
    total += w;
  }
  for (auto& k : post.kernels) k.weight /= total;
  return {post, total * std::exp(max_ll)};
}

}  // namespace detail

// Mixture analysis: every kernel gets its own Kalman update; weights multiply
// by the kernel marginal likelihoods and renormalize. Returns the posterior
// and the mixture marginal likelihood of y.
inline std::pair<GaussianMixture1, double> mixture_update(const GaussianMixture1& prior, double y,
                                                          double R) {
  return detail::mixture_update_impl(prior, [&](const Gaussian1& g, double& ll) {
    ll = normal_log_pdf(y, g.mean, g.var + R);
    return kalman_update(g, y, R).first;
  });
}

inline std::pair<GaussianMixture2, double> mixture_update(const GaussianMixture2& prior, double y,
                                                          double R) {
  return detail::mixture_update_impl(prior, [&](const Gaussian2& g, double& ll) {
    ll = normal_log_pdf(y, g.mean_u, g.var_u + R);
    return joint_kalman_update(g, y, R).first;
  });
}

// ---------------------------------------------------------------------------
// Moment matching and mixture reduction.
// ---------------------------------------------------------------------------

// Exact first two moments of the mixture (law of total expectation/variance).
inline Gaussian1 moment_match(const GaussianMixture1& mix) {
  mix.validate();
  return {mix.mean(), mix.variance()};
}

inline Gaussian2 moment_match(const GaussianMixture2& mix) {
  mix.validate();
  double mu = 0.0, mg = 0.0;
  for (const auto& k : mix.kernels) {
    mu += k.weight * k.g.mean_u;
    mg += k.weight * k.g.mean_g;
  }
  double vu = 0.0, vg = 0.0, cug = 0.0;
  for (const auto& k : mix.kernels) {
    vu += k.weight * (k.g.var_u + k.g.mean_u * k.g.mean_u);
    vg += k.weight * (k.g.var_g + k.g.mean_g * k.g.mean_g);
    cug += k.weight * (k.g.cov_ug + k.g.mean_u * k.g.mean_g);
  }
  Gaussian2 out{mu, mg, vu - mu * mu, vg - mg * mg, cug - mu * mg};
  out.psd_repair();
  return out;
}

// Reduce to at most k_max kernels by repeatedly merging the two kernels of
// smallest weight into their moment-matched combination. Labels survive a
// merge only when both partners agree.
inline GaussianMixture1 reduce_mixture(const GaussianMixture1& mix, int k_max) {
  if (k_max < 1) throw std::invalid_argument("reduce_mixture: k_max must be >= 1");
  mix.validate();
  GaussianMixture1 out = mix;
  while ((int)out.kernels.size() > k_max) {
    std::size_t i0 = 0, i1 = 1;
    if (out.kernels[i1].weight < out.kernels[i0].weight) std::swap(i0, i1);
    for (std::size_t j = 2; j < out.kernels.size(); ++j) {
      if (out.kernels[j].weight < out.kernels[i0].weight) {
        i1 = i0;
        i0 = j;
      } else if (out.kernels[j].weight < out.kernels[i1].weight) {
        i1 = j;
      }
    }
    const Kernel1 a = out.kernels[i0];
    const Kernel1 b = out.kernels[i1];
    const double w = a.weight + b.weight;
    Kernel1 merged;
    merged.weight = w;
    merged.label = (a.label == b.label) ? a.label : ModeLabel::none;
    if (w > 0.0) {
      const double wa = a.weight / w;
      const double wb = b.weight / w;
      const double m = wa * a.g.mean + wb * b.g.mean;
      const double s = wa * (a.g.var + a.g.mean * a.g.mean) + wb * (b.g.var + b.g.mean * b.g.mean);
      merged.g = {m, std::max(s - m * m, 0.0)};
    } else {
      merged.g = a.g;
    }
    if (i0 < i1) std::swap(i0, i1);  // erase the larger index first
    out.kernels.erase(out.kernels.begin() + i0);
    out.kernels.erase(out.kernels.begin() + i1);
    out.kernels.push_back(merged);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Density distance.
// ---------------------------------------------------------------------------

// Trapezoid approximation of int_lo^hi |p_a(x) - p_b(x)| dx on n nodes.
template <class Fa, class Fb>
double density_l1_distance(Fa&& pdf_a, Fb&& pdf_b, double lo, double hi, int n) {
  if (n < 2) throw std::invalid_argument("density_l1_distance: need n >= 2 grid nodes");
  if (!(lo < hi)) throw std::invalid_argument("density_l1_distance: need lo < hi");
  const double h = (hi - lo) / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + h * i;
    const double f = std::fabs(pdf_a(x) - pdf_b(x));
    acc += (i == 0 || i == n - 1) ? 0.5 * f : f;
  }
  return acc * h;
}

inline double density_l1_distance(const Gaussian1& a, const Gaussian1& b, double lo, double hi,
                                  int n) {
  return density_l1_distance([&](double x) { return a.pdf(x); },
                             [&](double x) { return b.pdf(x); }, lo, hi, n);
}

inline double density_l1_distance(const GaussianMixture1& a, const Gaussian1& b, double lo,
                                  double hi, int n) {
  return density_l1_distance([&](double x) { return a.pdf(x); },
                             [&](double x) { return b.pdf(x); }, lo, hi, n);
}

inline double density_l1_distance(const GaussianMixture1& a, const GaussianMixture1& b, double lo,
                                  double hi, int n) {
  return density_l1_distance([&](double x) { return a.pdf(x); },
                             [&](double x) { return b.pdf(x); }, lo, hi, n);
}

}  // namespace switchfilter::bayes
