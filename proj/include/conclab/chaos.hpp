#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "conclab/distributions.hpp"
#include "conclab/errors.hpp"
#include "conclab/linalg.hpp"
#include "conclab/montecarlo.hpp"
#include "conclab/rng.hpp"

namespace conclab::chaos {

using linalg::MatrixFamily;
using linalg::SymMatrix;
using distributions::CoordinateLaw;
using distributions::ProductDistribution;

// Exact E X^T A X from per-coordinate first and second moments:
//   sum_i A_ii E X_i^2 + sum_{i != j} A_ij E X_i E X_j.
inline double exact_quadratic_mean(const SymMatrix& a, const ProductDistribution& dist) {
    if (a.dim() != dist.n()) throw input_error("exact_quadratic_mean: dimension mismatch");
    std::vector<double> m1(dist.n());
    KahanSum acc;
    for (std::size_t i = 0; i < dist.n(); ++i) {
        m1[i] = dist.law(i).mean();
        acc.add(a(i, i) * dist.law(i).second_moment());
    }
    for (std::size_t i = 0; i < dist.n(); ++i)
        for (std::size_t j = 0; j < dist.n(); ++j)
            if (i != j) acc.add(a(i, j) * m1[i] * m1[j]);
    return acc.value();
}

struct CenteringInfo {
    std::vector<double> g;
    bool exact = true;
    double max_stderr = 0.0;  // 0 when exact
};

inline CenteringInfo exact_centering(const MatrixFamily& family, const ProductDistribution& dist) {
    CenteringInfo c;
    for (const SymMatrix& a : family.members) c.g.push_back(exact_quadratic_mean(a, dist));
    return c;
}

inline CenteringInfo monte_carlo_centering(const MatrixFamily& family, const ProductDistribution& dist,
                                           RngStream rng, std::size_t reps = 100000) {
    CenteringInfo c;
    c.exact = false;
    for (std::size_t k = 0; k < family.size(); ++k) {
        const SymMatrix& a = family[k];
        const auto est = montecarlo::estimate_mean(
            [&](const std::vector<double>& x) { return a.quad_form(x); }, dist, reps, rng.substream(k));
        c.g.push_back(est.mean);
        c.max_stderr = std::max(c.max_stderr, est.stderr_);
    }
    return c;
}

// The supremum problem Z(x) = max_A (x^T A x - g(A)). The centering g is a
// stored field, never recomputed behind the caller's back.
struct ChaosProblem {
    MatrixFamily family;
    ProductDistribution dist;
    std::vector<double> centering;
    bool centering_exact = true;
    double centering_stderr = 0.0;

    ChaosProblem(MatrixFamily f, ProductDistribution d, std::vector<double> g)
        : family(std::move(f)), dist(std::move(d)), centering(std::move(g)) {
        if (family.dim != dist.n()) throw input_error("ChaosProblem: family dim != dist n");
        if (centering.size() != family.size())
            throw input_error("ChaosProblem: centering length != family size");
    }

    static ChaosProblem with_exact_centering(MatrixFamily f, ProductDistribution d) {
        CenteringInfo c = exact_centering(f, d);
        return ChaosProblem(std::move(f), std::move(d), std::move(c.g));
    }
};

struct ZEval {
    double value;
    std::size_t argmax;  // lowest maximizing index
};

inline ZEval z_value(const ChaosProblem& problem, const std::vector<double>& x) {
    if (x.size() != problem.family.dim) throw input_error("z_value: length mismatch");
    ZEval best{-std::numeric_limits<double>::infinity(), 0};
    for (std::size_t k = 0; k < problem.family.size(); ++k) {
        const double v = problem.family[k].quad_form(x.data()) - problem.centering[k];
        if (v > best.value) best = {v, k};
    }
    return best;
}

inline double sup_norm_ax(const MatrixFamily& family, const std::vector<double>& x) {
    if (x.size() != family.dim) throw input_error("sup_norm_ax: length mismatch");
    std::vector<double> y(family.dim);
    double best = 0.0;
    for (const SymMatrix& a : family.members) {
        a.apply(x.data(), y.data());
        double norm2 = 0.0;
        for (double v : y) norm2 += v * v;
        best = std::max(best, norm2);
    }
    return std::sqrt(best);
}

namespace detail {

// Per-point scratch enabling O(#family) re-evaluation of Z after a single
// coordinate replacement: (x + d e_i)^T A (x + d e_i) = q + 2 d (Ax)_i + d^2 A_ii.
struct ZWorkspace {
    std::vector<double> quad;  // q_k = x^T A_k x
    std::vector<std::vector<double>> ax;

    void compute(const ChaosProblem& p, const std::vector<double>& x) {
        quad.resize(p.family.size());
        ax.resize(p.family.size());
        for (std::size_t k = 0; k < p.family.size(); ++k) {
            ax[k].resize(p.family.dim);
            p.family[k].apply(x.data(), ax[k].data());
            double q = 0.0;
            for (std::size_t i = 0; i < p.family.dim; ++i) q += x[i] * ax[k][i];
            quad[k] = q;
        }
    }

    double z(const ChaosProblem& p) const {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.family.size(); ++k)
            best = std::max(best, quad[k] - p.centering[k]);
        return best;
    }

    double z_replaced(const ChaosProblem& p, std::size_t i, double d) const {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.family.size(); ++k) {
            const double q = quad[k] + 2.0 * d * ax[k][i] + d * d * p.family[k](i, i);
            best = std::max(best, q - p.centering[k]);
        }
        return best;
    }
};

}  // namespace detail

// V_plus at x: sum_i E'_{X_i'} (Z(x) - Z(x with coordinate i resampled))_+^2,
// the resampling expectation exact over the coordinate law atoms.
inline double v_plus_exact(const ChaosProblem& problem, const std::vector<double>& x) {
    if (!problem.dist.finite_support()) throw capacity_error("v_plus_exact: infinite support");
    if (x.size() != problem.dist.n()) throw input_error("v_plus_exact: length mismatch");
    detail::ZWorkspace ws;
    ws.compute(problem, x);
    const double z0 = ws.z(problem);
    KahanSum total;
    for (std::size_t i = 0; i < problem.dist.n(); ++i) {
        for (const distributions::Atom& a : problem.dist.law(i).atoms()) {
            const double d = a.value - x[i];
            if (d == 0.0) continue;
            const double diff = z0 - ws.z_replaced(problem, i, d);
            if (diff > 0.0) total.add(a.prob * diff * diff);
        }
    }
    return total.value();
}

// Ent(e^{lambda Z}) over a finite distribution, anchored at max(lambda z) so
// only non-positive exponents are exponentiated.
inline double entropy_of_exp(const std::vector<double>& values, const std::vector<double>& probs,
                             double lambda) {
    if (values.size() != probs.size() || values.empty())
        throw input_error("entropy_of_exp: values/probs size mismatch");
    double anchor = -std::numeric_limits<double>::infinity();
    for (double z : values) anchor = std::max(anchor, lambda * z);
    KahanSum s_sum, t_sum;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double u = lambda * values[k] - anchor;
        const double e = std::exp(u);
        s_sum.add(probs[k] * e);
        t_sum.add(probs[k] * u * e);
    }
    const double s = s_sum.value();
    return std::exp(anchor) * (t_sum.value() - s * std::log(s));
}

struct MlsResult {
    double margin;       // lambda^2 E[V+ e^{lambda Z}] - Ent(e^{lambda Z}), >= 0 by theory
    double entropy;
    double energy_term;  // lambda^2 E[V+ e^{lambda Z}]
    std::uint64_t support_atoms;
};

// Exact modified log-Sobolev margin over the full product support.
inline MlsResult mls_check(const ChaosProblem& problem, double lambda) {
    if (lambda < 0.0) throw input_error("mls_check: lambda must be >= 0");
    std::vector<double> z_vals, vplus_vals, probs;
    detail::ZWorkspace ws;
    problem.dist.for_each_support([&](const std::vector<double>& x, double p) {
        ws.compute(problem, x);
        const double z0 = ws.z(problem);
        KahanSum vp;
        for (std::size_t i = 0; i < problem.dist.n(); ++i) {
            for (const distributions::Atom& a : problem.dist.law(i).atoms()) {
                const double d = a.value - x[i];
                if (d == 0.0) continue;
                const double diff = z0 - ws.z_replaced(problem, i, d);
                if (diff > 0.0) vp.add(a.prob * diff * diff);
            }
        }
        z_vals.push_back(z0);
        vplus_vals.push_back(vp.value());
        probs.push_back(p);
    });

    double anchor = 0.0;  // lambda >= 0 and the z-array is nonempty
    for (double z : z_vals) anchor = std::max(anchor, lambda * z);
    KahanSum s_sum, t_sum, v_sum;
    for (std::size_t k = 0; k < z_vals.size(); ++k) {
        const double u = lambda * z_vals[k] - anchor;
        const double e = std::exp(u);
        s_sum.add(probs[k] * e);
        t_sum.add(probs[k] * u * e);
        v_sum.add(probs[k] * vplus_vals[k] * e);
    }
    const double s = s_sum.value();
    const double scale = std::exp(anchor);
    MlsResult r;
    r.entropy = scale * (t_sum.value() - s * std::log(s));
    r.energy_term = scale * lambda * lambda * v_sum.value();
    r.margin = r.energy_term - r.entropy;
    r.support_atoms = z_vals.size();
    return r;
}

// Margin of the entropy variational formula on a finite joint law (Y, W):
//   E e^{lambda Y} log E e^W + Ent(e^{lambda Y}) - E[W e^{lambda Y}] >= 0.
inline double entropy_variational_check(const std::vector<double>& y_values,
                                        const std::vector<double>& w_values,
                                        const std::vector<double>& probs, double lambda) {
    if (y_values.size() != probs.size() || w_values.size() != probs.size() || probs.empty())
        throw input_error("entropy_variational_check: size mismatch");
    double a = -std::numeric_limits<double>::infinity();
    double b = -std::numeric_limits<double>::infinity();
    for (double y : y_values) a = std::max(a, lambda * y);
    for (double w : w_values) b = std::max(b, w);
    KahanSum sy, ty, sw, wy;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const double u = lambda * y_values[k] - a;
        const double e = std::exp(u);
        sy.add(probs[k] * e);
        ty.add(probs[k] * u * e);
        sw.add(probs[k] * std::exp(w_values[k] - b));
        wy.add(probs[k] * w_values[k] * e);
    }
    const double s = sy.value();
    const double log_mean_exp_w = b + std::log(sw.value());
    return std::exp(a) * (s * log_mean_exp_w + (ty.value() - s * std::log(s)) - wy.value());
}

// Coordinatewise split x = y + w at level M: y keeps the small entries.
struct TruncationSplit {
    double level;
    std::vector<double> y;
    std::vector<double> w;
};

inline TruncationSplit truncate(const std::vector<double>& x, double level) {
    if (!(level > 0.0)) throw input_error("truncate: level must be positive");
    TruncationSplit s{level, std::vector<double>(x.size()), std::vector<double>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) <= level) {
            s.y[i] = x[i];
            s.w[i] = 0.0;
        } else {
            s.y[i] = 0.0;
            s.w[i] = x[i];
        }
    }
    return s;
}

struct TruncationLevel {
    double level;    // 8 * E max_i |X_i|
    double stderr_;  // zero on the exact route
    bool exact;
};

// E max_i |X_i| is exact for finite-support coordinates via the CDF product
// P(max <= t) = prod_i P(|X_i| <= t); otherwise estimated by Monte Carlo.
inline TruncationLevel truncation_level(const ProductDistribution& dist, std::size_t reps,
                                        RngStream rng, unsigned workers = 0) {
    if (dist.finite_support()) {
        std::vector<double> thresholds;
        for (std::size_t i = 0; i < dist.n(); ++i)
            for (const distributions::Atom& a : dist.law(i).atoms())
                thresholds.push_back(std::abs(a.value));
        std::sort(thresholds.begin(), thresholds.end());
        thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
        KahanSum mean;
        double prev_cdf = 0.0;
        for (double t : thresholds) {
            double cdf = 1.0;
            for (std::size_t i = 0; i < dist.n(); ++i) cdf *= dist.law(i).abs_cdf(t);
            mean.add(t * (cdf - prev_cdf));
            prev_cdf = cdf;
        }
        return {8.0 * mean.value(), 0.0, true};
    }
    if (reps < 1000) throw input_error("truncation_level: need at least 1000 replicates");
    const auto est = montecarlo::estimate_mean(
        [](const std::vector<double>& x) {
            double m = 0.0;
            for (double v : x) m = std::max(m, std::abs(v));
            return m;
        },
        dist, reps, rng, workers);
    return {8.0 * est.mean, 8.0 * est.stderr_, false};
}

struct ExceedanceProbability {
    double p;
    double stderr_;
    bool exact;
};

// P(max_i |X_i| > M). The abs-CDF product is closed-form for every supported
// coordinate law, so the default route is exact; the Markov step guarantees
// p <= 1/8 when M comes from truncation_level.
inline ExceedanceProbability markov_truncation_check(const ProductDistribution& dist, double level) {
    double cdf = 1.0;
    for (std::size_t i = 0; i < dist.n(); ++i) cdf *= dist.law(i).abs_cdf(level);
    return {1.0 - cdf, 0.0, true};
}

inline ExceedanceProbability markov_truncation_check_mc(const ProductDistribution& dist, double level,
                                                        std::size_t reps, RngStream rng,
                                                        unsigned workers = 0) {
    const auto est = montecarlo::estimate_mean(
        [level](const std::vector<double>& x) {
            for (double v : x)
                if (std::abs(v) > level) return 1.0;
            return 0.0;
        },
        dist, reps, rng, workers);
    return {est.mean, est.stderr_, false};
}

namespace detail {

// Exhaustive Rademacher walk in Gray-code order; fn sees each sign vector
// once. The map eps -> -eps is exploited by fixing the last coordinate.
template <typename Fn>
void for_each_sign_vector_halved(std::size_t n, Fn&& fn) {
    if (n > 20) throw capacity_error("sign enumeration limited to dim <= 20");
    const std::size_t m = n - 1;
    std::vector<double> eps(n, 1.0);
    fn(eps, static_cast<std::size_t>(m));  // initial vector, no flip yet
    const std::uint64_t total = 1ULL << m;
    for (std::uint64_t k = 1; k < total; ++k) {
        const unsigned bit = static_cast<unsigned>(__builtin_ctzll(k));
        eps[bit] = -eps[bit];
        fn(eps, static_cast<std::size_t>(bit));
    }
}

}  // namespace detail

// E ||B eps|| / ||B||_HS over exact Rademacher enumeration; >= 1/sqrt(2).
inline double khinchin_check(const SymMatrix& b) {
    const std::size_t n = b.dim();
    if (n > 20) throw capacity_error("khinchin_check: dim must be <= 20");
    const double hs = linalg::hs_norm(b);
    if (hs == 0.0) throw domain_error("khinchin_check: zero matrix");
    std::vector<double> y(n);
    KahanSum mean;
    bool first = true;
    detail::for_each_sign_vector_halved(n, [&](const std::vector<double>& eps, std::size_t flipped) {
        if (first) {
            b.apply(eps.data(), y.data());
            first = false;
        } else {
            const double step = 2.0 * eps[flipped];
            for (std::size_t i = 0; i < n; ++i) y[i] += step * b(i, flipped);
        }
        double norm2 = 0.0;
        for (double v : y) norm2 += v * v;
        mean.add(std::sqrt(norm2));
    });
    const double scale = 1.0 / static_cast<double>(1ULL << (n - 1));
    return mean.value() * scale / hs;
}

// 4 max ||B||^2 - Var(sup_B ||B eps||) over exact enumeration; >= 0.
inline double convex_poincare_check(const MatrixFamily& family) {
    const std::size_t n = family.dim;
    if (n > 20) throw capacity_error("convex_poincare_check: dim must be <= 20");
    std::vector<std::vector<double>> y(family.size(), std::vector<double>(n));
    KahanSum mean, mean_sq;
    bool first = true;
    detail::for_each_sign_vector_halved(n, [&](const std::vector<double>& eps, std::size_t flipped) {
        for (std::size_t k = 0; k < family.size(); ++k) {
            if (first) {
                family[k].apply(eps.data(), y[k].data());
            } else {
                const double step = 2.0 * eps[flipped];
                for (std::size_t i = 0; i < n; ++i) y[k][i] += step * family[k](i, flipped);
            }
        }
        first = false;
        double sup2 = 0.0;
        for (std::size_t k = 0; k < family.size(); ++k) {
            double norm2 = 0.0;
            for (double v : y[k]) norm2 += v * v;
            sup2 = std::max(sup2, norm2);
        }
        const double sup = std::sqrt(sup2);
        mean.add(sup);
        mean_sq.add(sup2);
    });
    const double scale = 1.0 / static_cast<double>(1ULL << (n - 1));
    const double ev = mean.value() * scale;
    const double variance = mean_sq.value() * scale - ev * ev;
    double max_op2 = 0.0;
    for (const SymMatrix& m : family.members) {
        const double op = linalg::spectral_norm(m);
        max_op2 = std::max(max_op2, op * op);
    }
    return 4.0 * max_op2 - variance;
}

// E sup_B Y^T B Y - E sup_B Y^T Diag(B) Y for PSD members and a symmetric iid
// law; exact by product-support enumeration; >= 0.
inline double diag_comparison_check(const MatrixFamily& family, const CoordinateLaw& law) {
    if (!law.is_finite()) throw capacity_error("diag_comparison_check: finite law required");
    if (!law.symmetric()) throw domain_error("diag_comparison_check: law must be symmetric");
    for (const SymMatrix& b : family.members) {
        const double op = linalg::spectral_norm(b);
        if (op > 0.0 && linalg::min_eigenvalue(b) < -1e-10 * op)
            throw domain_error("diag_comparison_check: family member is not PSD");
    }
    const ProductDistribution dist(family.dim, law);
    KahanSum full_mean, diag_mean;
    dist.for_each_support([&](const std::vector<double>& yv, double p) {
        double sup_full = -std::numeric_limits<double>::infinity();
        double sup_diag = -std::numeric_limits<double>::infinity();
        for (const SymMatrix& b : family.members) {
            sup_full = std::max(sup_full, b.quad_form(yv.data()));
            double dq = 0.0;
            for (std::size_t i = 0; i < family.dim; ++i) dq += b(i, i) * yv[i] * yv[i];
            sup_diag = std::max(sup_diag, dq);
        }
        full_mean.add(p * sup_full);
        diag_mean.add(p * sup_diag);
    });
    return full_mean.value() - diag_mean.value();
}

struct RatioEstimate {
    double ratio;
    double stderr_;
    double numerator_mean;
    double denominator_mean;
};

// Monte Carlo E sup||Diag(A)X|| / E sup||AX|| with a delta-method standard
// error from the paired replicates.
inline RatioEstimate diag_removal_ratio(const MatrixFamily& family, const ProductDistribution& dist,
                                        std::size_t reps, RngStream rng, unsigned workers = 0) {
    if (family.dim != dist.n()) throw input_error("diag_removal_ratio: dimension mismatch");
    if (!dist.all_centered()) throw input_error("diag_removal_ratio: distribution must be centered");
    if (reps < 100) throw input_error("diag_removal_ratio: need at least 100 replicates");
    MatrixFamily diag_family = family;
    for (SymMatrix& m : diag_family.members) m = linalg::diag_part(m);
    struct Moments {
        KahanSum a, b, aa, bb, ab;
    };
    Moments mom = montecarlo::replicate_accumulate<Moments>(
        reps, rng, Moments{},
        [&](Moments& st, std::size_t, RngStream& stream) {
            std::vector<double> x;
            dist.sample(stream, x);
            const double av = sup_norm_ax(diag_family, x);
            const double bv = sup_norm_ax(family, x);
            st.a.add(av);
            st.b.add(bv);
            st.aa.add(av * av);
            st.bb.add(bv * bv);
            st.ab.add(av * bv);
        },
        [](Moments& out, Moments& in) {
            out.a.add(in.a.value());
            out.b.add(in.b.value());
            out.aa.add(in.aa.value());
            out.bb.add(in.bb.value());
            out.ab.add(in.ab.value());
        },
        workers);
    const double r = static_cast<double>(reps);
    const double ma = mom.a.value() / r;
    const double mb = mom.b.value() / r;
    if (mb == 0.0) return {ma == 0.0 ? 1.0 : std::numeric_limits<double>::infinity(), 0.0, ma, mb};
    const double va = mom.aa.value() / r - ma * ma;
    const double vb = mom.bb.value() / r - mb * mb;
    const double cab = mom.ab.value() / r - ma * mb;
    const double ratio = ma / mb;
    const double var_ratio =
        std::max(0.0, (va + ratio * ratio * vb - 2.0 * ratio * cab) / (mb * mb) / r);
    return {ratio, std::sqrt(var_ratio), ma, mb};
}

struct GaussianComparisonRow {
    double t;
    double empirical;        // quantile of sup||AX|| at level 1 - e^{-t} (mean at t = 0)
    double empirical_upper;  // order-statistic upper confidence value
    double bound;            // K (E sup||AG|| + sup||A|| sqrt(t))
    double ratio;
};

struct GaussianComparisonReport {
    double psi2_max;
    double e_sup_ag;
    double op_max;
    std::vector<GaussianComparisonRow> rows;
    double fitted_multiplier;  // smallest constant making the bound dominate
};

// Compares empirical quantiles of sup||AX|| with the majorizing-measure-type
// bound K (E sup||AG|| + sup||A|| sqrt(t)) and reports the fitted multiplier.
inline GaussianComparisonReport gaussian_comparison_estimate(const MatrixFamily& family,
                                                             const ProductDistribution& dist,
                                                             const std::vector<double>& t_grid,
                                                             std::size_t reps, RngStream rng,
                                                             unsigned workers = 0) {
    if (!dist.all_centered()) throw input_error("gaussian_comparison_estimate: centered dist required");
    if (reps < 1000) throw input_error("gaussian_comparison_estimate: need at least 1000 replicates");
    GaussianComparisonReport rep;
    rep.psi2_max = 0.0;
    for (std::size_t i = 0; i < dist.n(); ++i)
        rep.psi2_max = std::max(rep.psi2_max, distributions::psi_alpha_norm(dist.law(i), 2.0));
    rep.op_max = 0.0;
    for (const SymMatrix& a : family.members)
        rep.op_max = std::max(rep.op_max, linalg::spectral_norm(a));

    const ProductDistribution gauss(dist.n(), CoordinateLaw::standard_gaussian());
    auto sup_eval = [&family](const std::vector<double>& x) { return sup_norm_ax(family, x); };
    rep.e_sup_ag = montecarlo::estimate_mean(sup_eval, gauss, reps, rng.substream(1), workers).mean;

    std::vector<double> values =
        montecarlo::replicate_values(sup_eval, dist, reps, rng.substream(2), workers);
    const double mean_ax = montecarlo::mean_of(values).mean;
    std::sort(values.begin(), values.end());

    rep.fitted_multiplier = 0.0;
    for (double t : t_grid) {
        GaussianComparisonRow row;
        row.t = t;
        row.bound = rep.psi2_max * (rep.e_sup_ag + rep.op_max * std::sqrt(std::max(0.0, t)));
        if (t <= 0.0) {
            row.empirical = mean_ax;
            row.empirical_upper = mean_ax;
        } else {
            const double q = 1.0 - std::exp(-t);
            const double nq = q * static_cast<double>(reps);
            const double spread = 4.0 * std::sqrt(std::max(1.0, nq * (1.0 - q)));
            const std::size_t idx =
                std::min<std::size_t>(reps - 1, static_cast<std::size_t>(std::floor(nq)));
            const std::size_t idx_hi =
                std::min<std::size_t>(reps - 1, static_cast<std::size_t>(std::floor(nq + spread)));
            row.empirical = values[idx];
            row.empirical_upper = values[idx_hi];
        }
        row.ratio = row.bound > 0.0 ? row.empirical_upper / row.bound
                                    : (row.empirical_upper > 0.0
                                           ? std::numeric_limits<double>::infinity()
                                           : 0.0);
        rep.fitted_multiplier = std::max(rep.fitted_multiplier, row.ratio);
        rep.rows.push_back(row);
    }
    return rep;
}

struct TruncationGapEstimate {
    double level;          // M = 8 E max|X_i|
    double mean_zx;
    double mean_zy;        // Z evaluated on the truncated vector, same streams
    double gap;
    double psi2_max_abs;   // empirical psi_2 of max_i |X_i| (upper bracket)
    double e_sup_ax;
    double op_max;
    double bound_rhs;      // psi2 * E sup||AX|| + psi2^2 * sup||A||
    double fitted_constant;
};

// Empirical |E Z(X) - E Z(Y)| for the truncation split against the comparison
// bound psi2(max|X_i|) E sup||AX|| + psi2(max|X_i|)^2 sup||A||.
inline TruncationGapEstimate truncation_gap_estimate(const ChaosProblem& problem, std::size_t reps,
                                                     RngStream rng, unsigned workers = 0) {
    if (reps < 1000) throw input_error("truncation_gap_estimate: need at least 1000 replicates");
    TruncationGapEstimate out{};
    out.level = truncation_level(problem.dist, reps, rng.substream(0), workers).level;

    struct Sums {
        KahanSum zx, zy, supax;
        std::vector<double> maxabs;
    };
    Sums sums = montecarlo::replicate_accumulate<Sums>(
        reps, rng.substream(1), Sums{},
        [&](Sums& st, std::size_t, RngStream& stream) {
            std::vector<double> x;
            problem.dist.sample(stream, x);
            st.zx.add(z_value(problem, x).value);
            const TruncationSplit split = truncate(x, out.level);
            st.zy.add(z_value(problem, split.y).value);
            st.supax.add(sup_norm_ax(problem.family, x));
            double m = 0.0;
            for (double v : x) m = std::max(m, std::abs(v));
            st.maxabs.push_back(m);
        },
        [](Sums& a, Sums& b) {
            a.zx.add(b.zx.value());
            a.zy.add(b.zy.value());
            a.supax.add(b.supax.value());
            a.maxabs.insert(a.maxabs.end(), b.maxabs.begin(), b.maxabs.end());
        },
        workers);

    const double r = static_cast<double>(reps);
    out.mean_zx = sums.zx.value() / r;
    out.mean_zy = sums.zy.value() / r;
    out.gap = std::abs(out.mean_zx - out.mean_zy);
    out.e_sup_ax = sums.supax.value() / r;
    out.psi2_max_abs = distributions::empirical_psi_norm(sums.maxabs, 2.0).hi;
    out.op_max = 0.0;
    for (const SymMatrix& a : problem.family.members)
        out.op_max = std::max(out.op_max, linalg::spectral_norm(a));
    out.bound_rhs = out.psi2_max_abs * out.e_sup_ax + out.psi2_max_abs * out.psi2_max_abs * out.op_max;
    out.fitted_constant = out.bound_rhs > 0.0 ? out.gap / out.bound_rhs : 0.0;
    return out;
}

}  // namespace conclab::chaos
