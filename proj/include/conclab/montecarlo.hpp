#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "conclab/distributions.hpp"
#include "conclab/errors.hpp"
#include "conclab/rng.hpp"

namespace conclab::montecarlo {

inline unsigned env_worker_cap() {
    if (const char* env = std::getenv("CONCLAB_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 0;
}

// workers == 0 resolves to the CONCLAB_WORKERS cap, then hardware concurrency.
inline unsigned resolve_workers(unsigned workers) {
    if (workers != 0) return workers;
    const unsigned cap = env_worker_cap();
    if (cap != 0) return cap;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

namespace detail {

// Fixed-size blocks are claimed by whichever worker is free, but each block's
// content depends only on its index, so any worker count yields identical
// results. Exceptions are kept by lowest replicate index and rethrown after
// the join.
template <typename BlockFn>
void run_blocks(std::size_t count, std::size_t block_size, unsigned workers, BlockFn&& fn) {
    const std::size_t blocks = (count + block_size - 1) / block_size;
    workers = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(blocks, 1));
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b, b * block_size, std::min(count, (b + 1) * block_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::size_t first_error_block = blocks;
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                fn(b, b * block_size, std::min(count, (b + 1) * block_size));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (b < first_error_block) {
                    first_error_block = b;
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

constexpr std::size_t kBlockSize = 256;

}  // namespace detail

// Parallel loop over replicate indices; index i always works with
// rng.substream(i), independent of scheduling.
template <typename Fn>
void for_each_replicate(std::size_t count, RngStream rng, Fn&& fn, unsigned workers = 0,
                        std::size_t block_size = detail::kBlockSize) {
    detail::run_blocks(count, block_size, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RngStream stream = rng.substream(i);
            fn(i, stream);
        }
    });
}

using Evaluator = std::function<double(const std::vector<double>&)>;

// One value per replicate, ordered by replicate index; replicate i always
// draws from rng.substream(i).
inline std::vector<double> replicate_values(const Evaluator& eval,
                                            const distributions::ProductDistribution& dist,
                                            std::size_t reps, RngStream rng, unsigned workers = 0) {
    std::vector<double> values(reps);
    detail::run_blocks(reps, detail::kBlockSize, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> x;
        for (std::size_t i = begin; i < end; ++i) {
            RngStream stream = rng.substream(i);
            dist.sample(stream, x);
            const double v = eval(x);
            if (!std::isfinite(v)) throw replicate_error(i, "evaluator returned non-finite value");
            values[i] = v;
        }
    });
    return values;
}

// Generic deterministic replicate reduction: each fixed block owns a State,
// blocks are merged in index order.
template <typename State, typename PerReplicate, typename Merge>
State replicate_accumulate(std::size_t reps, RngStream rng, State init, PerReplicate&& per,
                           Merge&& merge, unsigned workers = 0,
                           std::size_t block_size = detail::kBlockSize) {
    const std::size_t blocks = (reps + block_size - 1) / block_size;
    std::vector<State> partial(blocks, init);
    detail::run_blocks(reps, block_size, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RngStream stream = rng.substream(i);
            per(partial[b], i, stream);
        }
    });
    State out = std::move(init);
    for (State& p : partial) merge(out, p);
    return out;
}

struct MeanEstimate {
    double mean;
    double stderr_;
    std::size_t reps;
};

inline MeanEstimate mean_of(const std::vector<double>& values) {
    KahanSum s;
    for (double v : values) s.add(v);
    const double mean = s.value() / static_cast<double>(values.size());
    KahanSum sq;
    for (double v : values) sq.add((v - mean) * (v - mean));
    const double var = values.size() > 1 ? sq.value() / static_cast<double>(values.size() - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(values.size())), values.size()};
}

inline MeanEstimate estimate_mean(const Evaluator& eval, const distributions::ProductDistribution& dist,
                                  std::size_t reps, RngStream rng, unsigned workers = 0) {
    if (reps < 100) throw input_error("estimate_mean: need at least 100 replicates");
    return mean_of(replicate_values(eval, dist, reps, rng, workers));
}

struct BinomialCI {
    double lo;
    double hi;
};

// Exact Clopper-Pearson interval via incomplete-beta inversion.
inline BinomialCI clopper_pearson(std::size_t successes, std::size_t trials, double confidence = 0.95) {
    if (trials == 0) throw input_error("clopper_pearson: trials must be positive");
    if (successes > trials) throw input_error("clopper_pearson: successes exceed trials");
    const double alpha = 1.0 - confidence;
    const double k = static_cast<double>(successes);
    const double n = static_cast<double>(trials);
    BinomialCI ci{0.0, 1.0};
    if (successes > 0)
        ci.lo = boost::math::quantile(boost::math::beta_distribution<double>(k, n - k + 1.0), alpha / 2.0);
    if (successes < trials)
        ci.hi = boost::math::quantile(boost::math::beta_distribution<double>(k + 1.0, n - k), 1.0 - alpha / 2.0);
    return ci;
}

struct TailEstimate {
    std::vector<double> t_grid;
    std::vector<double> point;    // empirical survival fractions P(value > t)
    std::vector<double> ci_low;   // 95% Clopper-Pearson
    std::vector<double> ci_high;
    std::size_t reps = 0;
};

// Survival curve from one sorted sample vector; monotone by construction.
inline TailEstimate tail_from_values(std::vector<double> values, const std::vector<double>& t_grid) {
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) throw input_error("tail grid must be strictly increasing");
    std::sort(values.begin(), values.end());
    TailEstimate est;
    est.t_grid = t_grid;
    est.reps = values.size();
    for (double t : t_grid) {
        const auto it = std::upper_bound(values.begin(), values.end(), t);
        const std::size_t exceed = static_cast<std::size_t>(values.end() - it);
        est.point.push_back(static_cast<double>(exceed) / static_cast<double>(values.size()));
        const BinomialCI ci = clopper_pearson(exceed, values.size());
        est.ci_low.push_back(ci.lo);
        est.ci_high.push_back(ci.hi);
    }
    return est;
}

inline TailEstimate estimate_tail(const Evaluator& eval, const distributions::ProductDistribution& dist,
                                  const std::vector<double>& t_grid, std::size_t reps, RngStream rng,
                                  unsigned workers = 0) {
    if (reps < 1000) throw input_error("estimate_tail: need at least 1000 replicates");
    return tail_from_values(replicate_values(eval, dist, reps, rng, workers), t_grid);
}

// Order statistic at index floor(q * reps).
inline double quantile_of(std::vector<double> values, double q) {
    if (!(q > 0.0 && q < 1.0)) throw input_error("estimate_quantile: q must lie in (0,1)");
    std::sort(values.begin(), values.end());
    std::size_t idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size())));
    idx = std::min(idx, values.size() - 1);
    return values[idx];
}

inline double estimate_quantile(const Evaluator& eval, const distributions::ProductDistribution& dist,
                                double q, std::size_t reps, RngStream rng, unsigned workers = 0) {
    if (reps < 1000) throw input_error("estimate_quantile: need at least 1000 replicates");
    return quantile_of(replicate_values(eval, dist, reps, rng, workers), q);
}

// --- parameter sweeps ---

using SweepPoint = std::vector<std::pair<std::string, double>>;
using SweepRunner = std::function<std::map<std::string, double>(const SweepPoint&, RngStream&)>;

struct SweepRecord {
    std::size_t index = 0;
    SweepPoint params;
    std::map<std::string, double> values;
    std::string status;  // "ok" or the error message
};

// One record per lattice point; point k always uses rng.substream(k), so the
// execution order and worker count never affect the outputs. Per-point
// failures are recorded, not propagated.
inline std::vector<SweepRecord> sweep(const std::vector<SweepPoint>& points, RngStream rng,
                                      const SweepRunner& runner, unsigned workers = 0) {
    std::vector<SweepRecord> records(points.size());
    detail::run_blocks(points.size(), 1, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            SweepRecord& rec = records[k];
            rec.index = k;
            rec.params = points[k];
            RngStream stream = rng.substream(k);
            try {
                rec.values = runner(points[k], stream);
                rec.status = "ok";
            } catch (const std::exception& e) {
                rec.status = std::string("error: ") + e.what();
            }
        }
    });
    return records;
}

// Cartesian lattice helper.
inline std::vector<SweepPoint> lattice(const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
    std::vector<SweepPoint> points{{}};
    for (const auto& [name, values] : axes) {
        std::vector<SweepPoint> next;
        next.reserve(points.size() * values.size());
        for (const SweepPoint& p : points)
            for (double v : values) {
                SweepPoint q = p;
                q.emplace_back(name, v);
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    return points;
}

}  // namespace conclab::montecarlo
