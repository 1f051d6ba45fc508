#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "conclab/errors.hpp"

namespace conclab::bounds {

// The papers' unspecified absolute constants, exposed as parameters.
// Defaults are 1; acceptance asserts existence of fitted constants, never
// specific values.
struct BoundParams {
    double c = 1.0;  // exponent constant
    double big_c = 1.0;  // prefactor / threshold constant
    double validity_threshold = 1.0;  // c_1 in validity clauses

    BoundParams() = default;
    BoundParams(double c_, double big_c_, double validity = 1.0)
        : c(c_), big_c(big_c_), validity_threshold(validity) {
        if (!(c > 0.0) || !(big_c > 0.0)) throw input_error("BoundParams: constants must be positive");
    }
};

struct TailCurve {
    std::vector<double> t_grid;
    std::vector<double> values;  // probabilities in [0,1]

    void validate() const {
        if (t_grid.size() != values.size()) throw input_error("TailCurve: size mismatch");
        for (std::size_t i = 1; i < t_grid.size(); ++i)
            if (!(t_grid[i] > t_grid[i - 1])) throw input_error("TailCurve: grid must increase");
        for (double v : values)
            if (!(v >= 0.0 && v <= 1.0)) throw input_error("TailCurve: values must lie in [0,1]");
    }
};

struct FlaggedBound {
    double value;
    bool valid;
};

namespace detail {

inline double clamp_prob(double log_value) {
    if (log_value >= 0.0) return 1.0;
    return std::exp(log_value);  // underflows gracefully to 0 below e^{-745}
}

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw input_error(std::string(name) + " must be positive");
}

inline void require_nonneg_t(double t) {
    if (!(t >= 0.0)) throw input_error("tail threshold t must be nonnegative");
}

// min(t^2 / quad, t / lin) with the conventions quad,lin in (0, inf];
// an infinite denominator removes its branch.
inline double min_exponent(double t, double quad, double lin) {
    const double a = std::isinf(quad) ? std::numeric_limits<double>::infinity() : t * t / quad;
    const double b = std::isinf(lin) ? std::numeric_limits<double>::infinity() : t / lin;
    return std::min(a, b);
}

}  // namespace detail

// 2 exp(-c min(t^2 / (K^4 hs^2), t / (K^2 op)))
inline double hanson_wright_rhs(double t, double k, double hs, double op,
                                const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(k, "K");
    detail::require_positive(hs, "hs norm");
    detail::require_positive(op, "operator norm");
    const double e = detail::min_exponent(t, k * k * k * k * hs * hs, k * k * op);
    return detail::clamp_prob(std::log(2.0) - params.c * e);
}

// 2 exp(-c min(t^2 / (E sup||AX||)^2, t / sup||A||))
inline double talagrand_rhs(double t, double e_sup_ax, double op, const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(e_sup_ax, "E sup||AX||");
    detail::require_positive(op, "operator norm");
    const double e = detail::min_exponent(t, e_sup_ax * e_sup_ax, op);
    return detail::clamp_prob(std::log(2.0) - params.c * e);
}

// 2 exp(-c min(t^2 / (K^2 (E sup||AX||)^2), t / (K^2 sup||A||)))
inline double adamczak_rhs(double t, double k, double e_sup_ax, double op,
                           const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(k, "K");
    detail::require_positive(e_sup_ax, "E sup||AX||");
    detail::require_positive(op, "operator norm");
    const double e = detail::min_exponent(t, k * k * e_sup_ax * e_sup_ax, k * k * op);
    return detail::clamp_prob(std::log(2.0) - params.c * e);
}

// Uniform Hanson-Wright for unbounded entries, M = || max_i |X_i| ||_{psi_2}:
// exp(-c min(t^2 / (M^2 (E sup||AX||)^2), t / (M^2 sup||A||))), valid for
// t >= max(M E sup||AX||, M^2 sup||A||).
inline FlaggedBound uniform_hw_rhs(double t, double m, double e_sup_ax, double op,
                                   const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(m, "M");
    detail::require_positive(e_sup_ax, "E sup||AX||");
    detail::require_positive(op, "operator norm");
    const double e = detail::min_exponent(t, m * m * e_sup_ax * e_sup_ax, m * m * op);
    const bool valid = t >= params.validity_threshold * std::max(m * e_sup_ax, m * m * op);
    return {detail::clamp_prob(-params.c * e), valid};
}

// Symmetric-entries variant against the Gaussian proxy G:
// exp(-c min(t^2 / (M^2 K^2 (E sup||AG||)^2), t / (M K sup||A||))), valid for
// t >= max(M K E sup||AG||, M K sup||A||).
inline FlaggedBound uniform_hw_gauss_rhs(double t, double m, double k, double e_sup_ag, double op,
                                         const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(m, "M");
    detail::require_positive(k, "K");
    detail::require_positive(e_sup_ag, "E sup||AG||");
    detail::require_positive(op, "operator norm");
    const double e = detail::min_exponent(t, m * m * k * k * e_sup_ag * e_sup_ag, m * k * op);
    const bool valid = t >= params.validity_threshold * std::max(m * k * e_sup_ag, m * k * op);
    return {detail::clamp_prob(-params.c * e), valid};
}

// Subgamma tail from the entropy/truncation lemma:
// exp(-c min(t^2 / (L + theta), t / sqrt(theta))).
inline double subgamma_rhs(double t, double l, double theta, const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    if (!(l >= 0.0) || !(theta >= 0.0)) throw input_error("subgamma_rhs: L, theta must be >= 0");
    const double quad = l + theta;
    if (quad == 0.0) return t == 0.0 ? 1.0 : 0.0;
    const double lin = theta == 0.0 ? std::numeric_limits<double>::infinity() : std::sqrt(theta);
    return detail::clamp_prob(-params.c * detail::min_exponent(t, quad, lin));
}

// Sparse-Bernoulli improvement: with s = min(sqrt(delta log n / |log delta|), sqrt(delta))
// and m = min(log n / |log delta|, 1),
// exp(-c min(t^2 / (s^2 hs^2), t / (m op))).
inline double improved_bernoulli_rhs(double t, double delta, double n, double hs, double op,
                                     const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    if (!(delta > 0.0 && delta < 1.0)) throw input_error("improved_bernoulli_rhs: delta in (0,1)");
    if (!(n >= 1.0)) throw input_error("improved_bernoulli_rhs: n must be >= 1");
    detail::require_positive(hs, "hs norm");
    detail::require_positive(op, "operator norm");
    const double log_ratio = std::log(static_cast<double>(n)) / std::abs(std::log(delta));
    const double s2 = std::min(delta * log_ratio, delta);
    const double m = std::min(log_ratio, 1.0);
    const double quad = s2 == 0.0 ? std::numeric_limits<double>::infinity() : s2 * hs * hs;
    const double lin = m == 0.0 ? std::numeric_limits<double>::infinity() : m * op;
    return detail::clamp_prob(-params.c * detail::min_exponent(t, quad, lin));
}

// Ising chaos bound:
// exp(-C min(t^2 / (E sup||A sigma|| + sup||A||)^2, t / sup||A||)).
inline double ising_rhs(double t, double e_sup_a_sigma, double op, const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    if (!(e_sup_a_sigma >= 0.0)) throw input_error("ising_rhs: E sup||A sigma|| must be >= 0");
    detail::require_positive(op, "operator norm");
    const double denom = e_sup_a_sigma + op;
    const double e = detail::min_exponent(t, denom * denom, op);
    return detail::clamp_prob(-params.big_c * e);
}

// Dimension-free matrix Bernstein: C r~ exp(-c min(u^2/sigma^2, u/M)),
// valid for u >= c1 max(M, sigma). May exceed 1 by design.
inline FlaggedBound matrix_bernstein_rhs(double u, double sigma2, double m, double eff_rank,
                                         const BoundParams& params = {}) {
    detail::require_nonneg_t(u);
    detail::require_positive(sigma2, "sigma^2");
    detail::require_positive(m, "M");
    if (!(eff_rank >= 1.0)) throw input_error("matrix_bernstein_rhs: effective rank >= 1 required");
    const double e = detail::min_exponent(u, sigma2, m);
    const bool valid = u >= params.validity_threshold * std::max(m, std::sqrt(sigma2));
    return {params.big_c * eff_rank * std::exp(-params.c * e), valid};
}

// Deviation-size bound for covariance estimation with missing observations:
// C ||Sigma|| max(sqrt(r~ log r~ / (N d^2)), sqrt(t / (N d^2)),
//                 r~ (log r~ + t) log N / (N d^2)).
inline double missing_cov_rhs(double t, double norm_sigma, double eff_rank, double n_samples,
                              double delta, const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    detail::require_positive(norm_sigma, "||Sigma||");
    if (!(eff_rank >= 1.0)) throw input_error("missing_cov_rhs: effective rank >= 1 required");
    if (!(n_samples >= 1.0)) throw input_error("missing_cov_rhs: N >= 1 required");
    if (!(delta > 0.0 && delta <= 1.0)) throw input_error("missing_cov_rhs: delta in (0,1]");
    const double nd2 = n_samples * delta * delta;
    const double log_r = std::log(eff_rank);
    const double term1 = std::sqrt(eff_rank * log_r / nd2);
    const double term2 = std::sqrt(t / nd2);
    const double term3 = eff_rank * (log_r + t) * std::log(n_samples) / nd2;
    return params.big_c * norm_sigma * std::max({term1, term2, term3});
}

// Talagrand-type bound for empirical processes with psi_1 envelopes, for the
// exceedance of Z beyond 2 E Z:
// exp(-t^2 / (4 sigma^2)) + 3 exp(-t / (C psi1_max)).
inline double empirical_process_rhs(double t, double e_z, double sigma2, double psi1_max,
                                    const BoundParams& params = {}) {
    detail::require_nonneg_t(t);
    if (!(e_z >= 0.0)) throw input_error("empirical_process_rhs: E Z must be >= 0");
    detail::require_positive(sigma2, "sigma^2");
    detail::require_positive(psi1_max, "psi_1 envelope");
    const double v =
        std::exp(-t * t / (4.0 * sigma2)) + 3.0 * std::exp(-t / (params.big_c * psi1_max));
    return std::min(v, 1.0);
}

// Largest c in (1e-6, 1e3] such that rhs(t; c) dominates the empirical upper
// CI at every valid grid point; bisection to 1e-4 relative width. Returns
// nullopt when even c = 1e-6 fails (fit-failure signal).
inline std::optional<double> fit_constant(
    const TailCurve& empirical_upper_ci, const std::function<double(double, double)>& rhs_at,
    const std::function<bool(double)>& valid_at = [](double) { return true; }) {
    empirical_upper_ci.validate();
    auto dominates = [&](double c) {
        for (std::size_t i = 0; i < empirical_upper_ci.t_grid.size(); ++i) {
            const double t = empirical_upper_ci.t_grid[i];
            if (!valid_at(t)) continue;
            if (rhs_at(t, c) < empirical_upper_ci.values[i]) return false;
        }
        return true;
    };
    double lo = 1e-6;
    double hi = 1e3;
    if (!dominates(lo)) return std::nullopt;
    if (dominates(hi)) return hi;  // hits the upper search cap
    while ((hi - lo) / hi > 1e-4) {
        const double mid = 0.5 * (lo + hi);
        (dominates(mid) ? lo : hi) = mid;
    }
    return lo;
}

// --- small fitting instruments shared by the experiments ---

struct LineFit {
    double slope;
    double intercept;
    double sse;
};

inline LineFit ols_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw input_error("ols_fit: need >= 2 points");
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw domain_error("ols_fit: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    f.sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (f.intercept + f.slope * xs[i]);
        f.sse += r * r;
    }
    return f;
}

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw domain_error("loglog_slope: positive data required");
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(ys[i]));
    }
    return ols_fit(lx, ly).slope;
}

struct RegimeFit {
    double single_sse;     // best of pure-quadratic / pure-linear in t
    double piecewise_sse;  // quadratic below the crossover, linear above
    double crossover;
    double improvement;    // 1 - piecewise/single
};

// Detects the quadratic-then-linear shape of a log-survival curve: fits
// log p = a + b t^2 and log p = a + b t globally, then the best split with a
// quadratic head and linear tail (>= 3 points per side).
inline RegimeFit fit_log_tail_regimes(const std::vector<double>& t, const std::vector<double>& log_p) {
    if (t.size() != log_p.size() || t.size() < 6)
        throw input_error("fit_log_tail_regimes: need >= 6 points");
    std::vector<double> t2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) t2[i] = t[i] * t[i];
    const double single = std::min(ols_fit(t2, log_p).sse, ols_fit(t, log_p).sse);
    RegimeFit best{single, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (std::size_t split = 3; split + 3 <= t.size(); ++split) {
        const std::vector<double> head_x(t2.begin(), t2.begin() + split);
        const std::vector<double> head_y(log_p.begin(), log_p.begin() + split);
        const std::vector<double> tail_x(t.begin() + split, t.end());
        const std::vector<double> tail_y(log_p.begin() + split, log_p.end());
        const double sse = ols_fit(head_x, head_y).sse + ols_fit(tail_x, tail_y).sse;
        if (sse < best.piecewise_sse) {
            best.piecewise_sse = sse;
            best.crossover = t[split];
        }
    }
    best.improvement = single > 0.0 ? 1.0 - best.piecewise_sse / single : 0.0;
    return best;
}

}  // namespace conclab::bounds
