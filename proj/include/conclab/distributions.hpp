#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conclab/errors.hpp"
#include "conclab/rng.hpp"

namespace conclab::distributions {

struct Atom {
    double value;
    double prob;
};

enum class LawKind { Rademacher, StandardGaussian, CenteredBernoulli, TwoPointSymmetric, FiniteSupport };

// Per-coordinate law. Finite-support kinds carry their atom table; the
// Gaussian is the only continuous kind.
class CoordinateLaw {
public:
    static CoordinateLaw rademacher() {
        return CoordinateLaw(LawKind::Rademacher, {{-1.0, 0.5}, {1.0, 0.5}});
    }

    static CoordinateLaw standard_gaussian() { return CoordinateLaw(LawKind::StandardGaussian, {}); }

    static CoordinateLaw centered_bernoulli(double delta) {
        if (!(delta > 0.0 && delta < 1.0))
            throw input_error("centered_bernoulli: delta must lie in (0,1)");
        CoordinateLaw law(LawKind::CenteredBernoulli, {{1.0 - delta, delta}, {-delta, 1.0 - delta}});
        law.delta_ = delta;
        return law;
    }

    // P(|X| = 1) = 1 - e^{-r}, P(|X| = sqrt(r)) = e^{-r}, sign-symmetric.
    static CoordinateLaw two_point_symmetric(double r) {
        if (!(r >= 4.0)) throw input_error("two_point_symmetric: requires r >= 4");
        const double p = std::exp(-r);
        CoordinateLaw law(LawKind::TwoPointSymmetric,
                          {{-std::sqrt(r), p / 2.0},
                           {-1.0, (1.0 - p) / 2.0},
                           {1.0, (1.0 - p) / 2.0},
                           {std::sqrt(r), p / 2.0}});
        law.r_ = r;
        return law;
    }

    static CoordinateLaw finite_support(std::vector<Atom> atoms) {
        if (atoms.empty()) throw input_error("finite_support: no atoms");
        KahanSum total;
        for (const Atom& a : atoms) {
            if (!std::isfinite(a.value)) throw input_error("finite_support: non-finite value");
            if (!(a.prob > 0.0)) throw input_error("finite_support: probabilities must be positive");
            total.add(a.prob);
        }
        if (std::abs(total.value() - 1.0) > 1e-12)
            throw input_error("finite_support: probabilities must sum to 1 within 1e-12");
        return CoordinateLaw(LawKind::FiniteSupport, std::move(atoms));
    }

    LawKind kind() const { return kind_; }
    bool is_finite() const { return kind_ != LawKind::StandardGaussian; }
    double delta() const { return delta_; }
    double r() const { return r_; }

    const std::vector<Atom>& atoms() const {
        if (!is_finite()) throw domain_error("atoms(): law has infinite support");
        return atoms_;
    }

    double mean() const {
        if (!is_finite()) return 0.0;
        KahanSum s;
        for (const Atom& a : atoms_) s.add(a.prob * a.value);
        return s.value();
    }

    double second_moment() const {
        if (!is_finite()) return 1.0;
        KahanSum s;
        for (const Atom& a : atoms_) s.add(a.prob * a.value * a.value);
        return s.value();
    }

    double variance() const {
        const double m = mean();
        return second_moment() - m * m;
    }

    double fourth_moment() const {
        if (!is_finite()) return 3.0;
        KahanSum s;
        for (const Atom& a : atoms_) s.add(a.prob * a.value * a.value * a.value * a.value);
        return s.value();
    }

    double max_abs_support() const {
        if (!is_finite()) return std::numeric_limits<double>::infinity();
        double m = 0.0;
        for (const Atom& a : atoms_) m = std::max(m, std::abs(a.value));
        return m;
    }

    // P(|X| <= t), exact.
    double abs_cdf(double t) const {
        if (t < 0.0) return 0.0;
        if (kind_ == LawKind::StandardGaussian) return std::erf(t / std::sqrt(2.0));
        KahanSum s;
        for (const Atom& a : atoms_)
            if (std::abs(a.value) <= t) s.add(a.prob);
        return std::min(s.value(), 1.0);
    }

    bool symmetric() const {
        if (kind_ == LawKind::StandardGaussian) return true;
        for (const Atom& a : atoms_) {
            bool matched = false;
            for (const Atom& b : atoms_)
                if (std::abs(b.value + a.value) <= 1e-15 && std::abs(b.prob - a.prob) <= 1e-12)
                    matched = true;
            if (!matched) return false;
        }
        return true;
    }

    double sample(RngStream& rng) const {
        switch (kind_) {
            case LawKind::StandardGaussian:
                return rng.gaussian();
            case LawKind::Rademacher:
                return (rng.next_u64() & 1ULL) ? 1.0 : -1.0;
            default: {
                double u = rng.uniform();
                for (const Atom& a : atoms_) {
                    if (u < a.prob) return a.value;
                    u -= a.prob;
                }
                return atoms_.back().value;  // guard against rounding at u ~ 1
            }
        }
    }

    // Law with values scaled by c.
    CoordinateLaw scaled(double c) const {
        if (!is_finite()) throw domain_error("scaled(): finite-support laws only");
        if (c == 0.0) return finite_support({{0.0, 1.0}});
        std::vector<Atom> scaled_atoms = atoms_;
        for (Atom& a : scaled_atoms) a.value *= c;
        return CoordinateLaw(LawKind::FiniteSupport, std::move(scaled_atoms));
    }

private:
    CoordinateLaw(LawKind k, std::vector<Atom> atoms) : kind_(k), atoms_(std::move(atoms)) {}

    LawKind kind_;
    std::vector<Atom> atoms_;
    double delta_ = 0.0;
    double r_ = 0.0;
};

// Product of n independent coordinate laws (shared law or one per coordinate).
class ProductDistribution {
public:
    ProductDistribution(std::size_t n, CoordinateLaw shared) : n_(check_n(n)), shared_(std::move(shared)) {}

    explicit ProductDistribution(std::vector<CoordinateLaw> laws)
        : n_(check_n(laws.size())), laws_(std::move(laws)) {}

    std::size_t n() const { return n_; }

    const CoordinateLaw& law(std::size_t i) const {
        if (i >= n_) throw input_error("ProductDistribution::law: index out of range");
        return laws_.empty() ? *shared_ : laws_[i];
    }

    bool finite_support() const {
        for (std::size_t i = 0; i < n_; ++i)
            if (!law(i).is_finite()) return false;
        return true;
    }

    bool all_centered(double tol = 1e-12) const {
        for (std::size_t i = 0; i < n_; ++i)
            if (std::abs(law(i).mean()) > tol) return false;
        return true;
    }

    // Total atom count, saturating at 2^63 to avoid overflow.
    std::uint64_t support_size() const {
        if (!finite_support()) throw domain_error("support_size: infinite support");
        std::uint64_t total = 1;
        for (std::size_t i = 0; i < n_; ++i) {
            const std::uint64_t k = law(i).atoms().size();
            if (total > (1ULL << 62) / k) return 1ULL << 63;
            total *= k;
        }
        return total;
    }

    void sample(RngStream& rng, std::vector<double>& out) const {
        out.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = law(i).sample(rng);
    }

    std::vector<double> sample(RngStream& rng) const {
        std::vector<double> x;
        sample(rng, x);
        return x;
    }

    static constexpr std::uint64_t kEnumerationCap = 1ULL << 20;

    // Streaming exhaustive walk of the product support; fn(x, probability).
    // Throws capacity_error beyond 2^20 atoms rather than silently sampling.
    template <typename Fn>
    void for_each_support(Fn&& fn, std::uint64_t cap = kEnumerationCap) const {
        if (!finite_support()) throw capacity_error("enumerate_support: infinite support");
        if (support_size() > cap)
            throw capacity_error("enumerate_support: support exceeds capacity (2^20 atoms)");
        std::vector<std::size_t> idx(n_, 0);
        std::vector<double> x(n_);
        std::vector<double> logp(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            x[i] = law(i).atoms()[0].value;
            logp[i] = law(i).atoms()[0].prob;
        }
        for (;;) {
            double p = 1.0;
            for (std::size_t i = 0; i < n_; ++i) p *= logp[i];
            fn(static_cast<const std::vector<double>&>(x), p);
            std::size_t i = 0;
            for (; i < n_; ++i) {
                if (++idx[i] < law(i).atoms().size()) {
                    x[i] = law(i).atoms()[idx[i]].value;
                    logp[i] = law(i).atoms()[idx[i]].prob;
                    break;
                }
                idx[i] = 0;
                x[i] = law(i).atoms()[0].value;
                logp[i] = law(i).atoms()[0].prob;
            }
            if (i == n_) break;
        }
    }

    std::vector<std::pair<std::vector<double>, double>> enumerate_support() const {
        if (!finite_support()) throw capacity_error("enumerate_support: infinite support");
        std::vector<std::pair<std::vector<double>, double>> out;
        out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(support_size(), kEnumerationCap)));
        for_each_support([&](const std::vector<double>& x, double p) { out.emplace_back(x, p); });
        return out;
    }

private:
    static std::size_t check_n(std::size_t n) {
        if (n == 0) throw input_error("ProductDistribution: n must be positive");
        return n;
    }

    std::size_t n_;
    std::optional<CoordinateLaw> shared_;
    std::vector<CoordinateLaw> laws_;
};

namespace detail {

// Smallest t with mean_exp(t) <= 2 by bracketed bisection. mean_exp must be
// nonincreasing in t; returns 0 when even vanishing t satisfies the bound.
inline double psi_bisect(const std::function<double(double)>& mean_exp, double hi_start) {
    double lo = 1e-12;
    if (mean_exp(lo) <= 2.0) return 0.0;
    double hi = std::max(1.0, hi_start);
    int doublings = 0;
    while (mean_exp(hi) > 2.0) {
        hi *= 2.0;
        if (++doublings > 200)
            throw domain_error("psi_alpha_norm: expectation exceeds 2 on the whole search grid");
    }
    while ((hi - lo) / hi > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        (mean_exp(mid) <= 2.0 ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace detail

// Orlicz norm: inf{ t >= 0 : E exp(|Y|^alpha / t^alpha) <= 2 }. Exact for
// finite support, closed-form for the Gaussian at alpha = 2.
inline double psi_alpha_norm(const CoordinateLaw& law, double alpha) {
    if (!(alpha >= 1.0)) throw input_error("psi_alpha_norm: alpha must be >= 1");
    if (law.kind() == LawKind::StandardGaussian) {
        if (alpha == 2.0) return std::sqrt(8.0 / 3.0);  // 1/sqrt(1-2/t^2) = 2
        if (alpha > 2.0) throw domain_error("psi_alpha_norm: divergent for Gaussian with alpha > 2");
        throw domain_error("psi_alpha_norm: no exact route for Gaussian with alpha < 2; use psi_alpha_norm_mc");
    }
    const double m = law.max_abs_support();
    if (m == 0.0) return 0.0;
    auto mean_exp = [&](double t) {
        KahanSum s;
        for (const Atom& a : law.atoms()) {
            const double e = std::pow(std::abs(a.value) / t, alpha);
            if (e > 700.0) return std::numeric_limits<double>::infinity();
            s.add(a.prob * std::exp(e));
        }
        return s.value();
    };
    return detail::psi_bisect(mean_exp, m * 64.0);
}

struct PsiNormBracket {
    double point;
    double lo;
    double hi;
};

// Bisection on the empirical mean of exp(|y|^alpha / t^alpha); the bracket
// widens the target by four standard errors of that mean at the solution.
inline PsiNormBracket empirical_psi_norm(const std::vector<double>& sample, double alpha) {
    if (!(alpha >= 1.0)) throw input_error("empirical_psi_norm: alpha must be >= 1");
    if (sample.empty()) throw input_error("empirical_psi_norm: empty sample");
    double m = 0.0;
    for (double v : sample) m = std::max(m, std::abs(v));
    if (m == 0.0) return {0.0, 0.0, 0.0};
    auto mean_exp_at = [&](double t, double target) {
        KahanSum s;
        for (double v : sample) {
            const double e = std::pow(std::abs(v) / t, alpha);
            if (e > 700.0) return std::numeric_limits<double>::infinity();
            s.add(std::exp(e));
        }
        return s.value() / static_cast<double>(sample.size()) - (target - 2.0);
    };
    auto solve = [&](double target) {
        return detail::psi_bisect([&](double t) { return mean_exp_at(t, target); }, m * 64.0);
    };
    const double point = solve(2.0);
    // standard error of the empirical mean at the solution point
    double mean = 0.0, sq = 0.0;
    for (double v : sample) {
        const double e = std::exp(std::min(700.0, std::pow(std::abs(v) / std::max(point, 1e-300), alpha)));
        mean += e;
        sq += e * e;
    }
    mean /= static_cast<double>(sample.size());
    const double var = std::max(0.0, sq / static_cast<double>(sample.size()) - mean * mean);
    const double se = std::sqrt(var / static_cast<double>(sample.size()));
    return {point, solve(2.0 + 4.0 * se), solve(std::max(1.5, 2.0 - 4.0 * se))};
}

inline PsiNormBracket psi_alpha_norm_mc(const CoordinateLaw& law, double alpha, std::size_t reps,
                                        RngStream rng) {
    if (reps < 1000) throw input_error("psi_alpha_norm_mc: need at least 1000 replicates");
    std::vector<double> sample(reps);
    for (double& v : sample) v = law.sample(rng);
    return empirical_psi_norm(sample, alpha);
}

// Closed form for ||delta_1 - delta||^2_{psi_2}-equivalent subgaussian
// constant of the centered Bernoulli law: (1-2d)/(4 log((1-d)/d)).
inline double bernoulli_psi2_squared(double delta) {
    if (!(delta > 0.0 && delta <= 0.25))
        throw input_error("bernoulli_psi2_squared: delta must lie in (0, 1/4]");
    return (1.0 - 2.0 * delta) / (4.0 * std::log((1.0 - delta) / delta));
}

struct MaxMoments {
    double l1;  // E max_i X_i^2
    double l2;  // (E (max_i X_i^2)^2)^{1/2}
};

// Exact first two moments of max_i X_i^2 over n iid two-point variables:
// max^2 equals r unless every |X_i| = 1, which happens with prob (1-e^{-r})^n.
inline MaxMoments counterexample_max_moments(double r, std::size_t n) {
    if (!(r >= 4.0)) throw input_error("counterexample_max_moments: r must be >= 4");
    if (n == 0) throw input_error("counterexample_max_moments: n must be positive");
    const double p = std::exp(-r);
    const double q = std::pow(1.0 - p, static_cast<double>(n));
    return {r * (1.0 - q) + q, std::sqrt(r * r * (1.0 - q) + q)};
}

// Exact scan for a tail-regularity violation on a finite-support law:
// exists t >= E|Y| with P(Y^2 > A t) > (1/A) P(Y^2 > t). The survival
// function of Y^2 is a right-continuous step function, so it suffices to
// evaluate at t0, at every breakpoint b or b/A above t0, and at interval
// midpoints between consecutive candidates.
inline bool tail_regularity_violation_for_law(const CoordinateLaw& law, double big_a) {
    if (!(big_a > 1.0)) throw input_error("tail_regularity_violation: A must exceed 1");
    if (!law.is_finite()) throw domain_error("tail_regularity_violation: finite support required");
    KahanSum abs_mean;
    for (const Atom& a : law.atoms()) abs_mean.add(a.prob * std::abs(a.value));
    const double t0 = abs_mean.value();
    auto survival_sq = [&](double t) {
        KahanSum s;
        for (const Atom& a : law.atoms())
            if (a.value * a.value > t) s.add(a.prob);
        return s.value();
    };
    std::vector<double> candidates{t0};
    for (const Atom& a : law.atoms()) {
        const double b = a.value * a.value;
        if (b >= t0) candidates.push_back(b);
        if (b / big_a >= t0) candidates.push_back(b / big_a);
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<double> probes = candidates;
    for (std::size_t i = 0; i + 1 < candidates.size(); ++i)
        probes.push_back(0.5 * (candidates[i] + candidates[i + 1]));
    for (double t : probes)
        if (survival_sq(big_a * t) > survival_sq(t) / big_a) return true;
    return false;
}

// Two-point counterexample law. Note the edge at A -> 1+: on any flat stretch
// of the survival function the strict margin S(t) > S(t)/A holds whenever
// S(t) > 0, so values of A barely above 1 report a violation for every r.
inline bool tail_regularity_violation(double r, double big_a) {
    return tail_regularity_violation_for_law(CoordinateLaw::two_point_symmetric(r), big_a);
}

}  // namespace conclab::distributions
