#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "conclab/errors.hpp"
#include "conclab/rng.hpp"

namespace conclab::linalg {

// Plain dense row-major matrix; used for sample blocks, rotations and
// eigenvector tables. No invariants beyond finite storage.
struct RowMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RowMatrix() = default;
    RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }
};

// Dense real symmetric matrix. Symmetry is enforced at construction by
// averaging (A + Aᵀ)/2; if the input was asymmetric beyond 1e-12 the
// `was_symmetrized` flag is raised so callers can warn.
class SymMatrix {
public:
    explicit SymMatrix(std::size_t dim) : n_(check_dim(dim)), a_(dim * dim, 0.0) {}

    SymMatrix(std::size_t dim, std::vector<double> entries) : n_(check_dim(dim)), a_(std::move(entries)) {
        if (a_.size() != n_ * n_) throw input_error("SymMatrix: entry count does not match dim*dim");
        double max_asym = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i + 1; j < n_; ++j) {
                const double x = a_[i * n_ + j];
                const double y = a_[j * n_ + i];
                max_asym = std::max(max_asym, std::abs(x - y));
                const double avg = 0.5 * (x + y);
                a_[i * n_ + j] = avg;
                a_[j * n_ + i] = avg;
            }
        }
        for (double v : a_)
            if (!std::isfinite(v)) throw input_error("SymMatrix: non-finite entry");
        symmetrized_ = max_asym > 1e-12;
    }

    static SymMatrix identity(std::size_t dim) {
        SymMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) m.a_[i * dim + i] = 1.0;
        return m;
    }

    static SymMatrix diagonal(const std::vector<double>& d) {
        SymMatrix m(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!std::isfinite(d[i])) throw input_error("SymMatrix: non-finite entry");
            m.a_[i * d.size() + i] = d[i];
        }
        return m;
    }

    std::size_t dim() const { return n_; }
    bool was_symmetrized() const { return symmetrized_; }
    const std::vector<double>& data() const { return a_; }

    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    // Mirrored write; the only mutation path, so symmetry cannot drift.
    void set(std::size_t i, std::size_t j, double v) {
        if (!std::isfinite(v)) throw input_error("SymMatrix::set: non-finite value");
        a_[i * n_ + j] = v;
        a_[j * n_ + i] = v;
    }

    double trace() const {
        KahanSum s;
        for (std::size_t i = 0; i < n_; ++i) s.add(a_[i * n_ + i]);
        return s.value();
    }

    // y = A x
    void apply(const double* x, double* y) const {
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = a_.data() + i * n_;
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != n_) throw input_error("SymMatrix::apply: length mismatch");
        std::vector<double> y(n_);
        apply(x.data(), y.data());
        return y;
    }

    double quad_form(const double* x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = a_.data() + i * n_;
            double ri = 0.0;
            for (std::size_t j = 0; j < n_; ++j) ri += row[j] * x[j];
            acc += x[i] * ri;
        }
        return acc;
    }

    double quad_form(const std::vector<double>& x) const {
        if (x.size() != n_) throw input_error("SymMatrix::quad_form: length mismatch");
        return quad_form(x.data());
    }

    SymMatrix& operator+=(const SymMatrix& o) {
        require_same_dim(o);
        for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
        return *this;
    }
    SymMatrix& operator-=(const SymMatrix& o) {
        require_same_dim(o);
        for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
        return *this;
    }
    SymMatrix& operator*=(double c) {
        for (double& v : a_) v *= c;
        return *this;
    }

    friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
    friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
    friend SymMatrix operator*(double c, SymMatrix a) { return a *= c; }

    // A·A; symmetric since A is.
    SymMatrix square() const {
        SymMatrix r(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i; j < n_; ++j) {
                double acc = 0.0;
                const double* ri = a_.data() + i * n_;
                const double* rj = a_.data() + j * n_;
                for (std::size_t k = 0; k < n_; ++k) acc += ri[k] * rj[k];
                r.a_[i * n_ + j] = acc;
                r.a_[j * n_ + i] = acc;
            }
        }
        return r;
    }

    void require_same_dim(const SymMatrix& o) const {
        if (o.n_ != n_) throw input_error("SymMatrix: dimension mismatch");
    }

private:
    static std::size_t check_dim(std::size_t dim) {
        if (dim == 0) throw input_error("SymMatrix: dim must be positive");
        return dim;
    }

    std::size_t n_;
    std::vector<double> a_;
    bool symmetrized_ = false;
};

// Finite ordered family of symmetric matrices over one dimension.
struct MatrixFamily {
    std::size_t dim;
    std::vector<SymMatrix> members;

    explicit MatrixFamily(std::vector<SymMatrix> m) : dim(0), members(std::move(m)) {
        if (members.empty()) throw input_error("MatrixFamily: empty family");
        dim = members.front().dim();
        for (const auto& a : members)
            if (a.dim() != dim) throw input_error("MatrixFamily: members must share dim");
    }

    std::size_t size() const { return members.size(); }
    const SymMatrix& operator[](std::size_t k) const { return members[k]; }
};

inline double hs_norm(const SymMatrix& a) {
    KahanSum s;
    for (double v : a.data()) s.add(v * v);
    return std::sqrt(s.value());
}

inline SymMatrix diag_part(const SymMatrix& a) {
    SymMatrix d(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) d.set(i, i, a(i, i));
    return d;
}

inline SymMatrix off_part(const SymMatrix& a) {
    SymMatrix o = a;
    for (std::size_t i = 0; i < a.dim(); ++i) o.set(i, i, 0.0);
    return o;
}

inline SymMatrix hadamard(const SymMatrix& a, const SymMatrix& b) {
    a.require_same_dim(b);
    SymMatrix r(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = i; j < a.dim(); ++j) r.set(i, j, a(i, j) * b(i, j));
    return r;
}

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    RowMatrix vectors;           // column j = eigenvector of values[j]
};

namespace detail {

// Cyclic Jacobi sweeps. Converges when the off-diagonal Frobenius mass drops
// below 1e-14 times the Hilbert-Schmidt norm of the input.
inline void jacobi(std::vector<double>& a, std::size_t n, RowMatrix* vectors) {
    if (vectors) {
        *vectors = RowMatrix(n, n);
        for (std::size_t i = 0; i < n; ++i) (*vectors)(i, i) = 1.0;
    }
    double hs2 = 0.0;
    for (double v : a) hs2 += v * v;
    if (hs2 == 0.0) return;
    const double target = 1e-28 * hs2;  // (1e-14 * ||A||_HS)^2

    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off2 += 2.0 * a[i * n + j] * a[i * n + j];
        if (off2 < target) return;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                // smaller-root tangent for stability
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if (vectors) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const double vkp = (*vectors)(k, p);
                        const double vkq = (*vectors)(k, q);
                        (*vectors)(k, p) = c * vkp - s * vkq;
                        (*vectors)(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
}

}  // namespace detail

// All eigenvalues, ascending.
inline std::vector<double> eigenvalues(const SymMatrix& a) {
    std::vector<double> work = a.data();
    detail::jacobi(work, a.dim(), nullptr);
    std::vector<double> ev(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) ev[i] = work[i * a.dim() + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

inline EigenDecomposition eigen_decomposition(const SymMatrix& a) {
    const std::size_t n = a.dim();
    std::vector<double> work = a.data();
    RowMatrix vec;
    detail::jacobi(work, n, &vec);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return work[i * n + i] < work[j * n + j]; });
    EigenDecomposition d;
    d.values.resize(n);
    d.vectors = RowMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        d.values[j] = work[order[j] * n + order[j]];
        for (std::size_t i = 0; i < n; ++i) d.vectors(i, j) = vec(i, order[j]);
    }
    return d;
}

// V f(Λ) Vᵀ
template <typename F>
SymMatrix apply_spectral_function(const SymMatrix& a, F&& f) {
    const std::size_t n = a.dim();
    const EigenDecomposition d = eigen_decomposition(a);
    SymMatrix r(n);
    std::vector<double> fv(n);
    for (std::size_t k = 0; k < n; ++k) fv[k] = f(d.values[k]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += d.vectors(i, k) * fv[k] * d.vectors(j, k);
            r.set(i, j, acc);
        }
    }
    return r;
}

inline double spectral_norm(const SymMatrix& a) {
    const std::vector<double> ev = eigenvalues(a);
    return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

inline double min_eigenvalue(const SymMatrix& a) { return eigenvalues(a).front(); }

inline double effective_rank(const SymMatrix& a) {
    const double op = spectral_norm(a);
    if (op == 0.0) throw domain_error("effective_rank: zero matrix");
    if (min_eigenvalue(a) < -1e-10 * op)
        throw domain_error("effective_rank: matrix is not positive semidefinite");
    const double r = a.trace() / op;
    return std::clamp(r, 1.0, static_cast<double>(a.dim()));
}

// A ⪯ B up to tol: min eigenvalue of (B - A) ≥ -tol.
inline bool psd_leq(const SymMatrix& a, const SymMatrix& b, double tol) {
    a.require_same_dim(b);
    if (tol < 0.0) throw input_error("psd_leq: tol must be nonnegative");
    return min_eigenvalue(b - a) >= -tol;
}

// y = Q x for a square RowMatrix Q.
inline std::vector<double> apply_rowmatrix(const RowMatrix& q, const std::vector<double>& x) {
    if (q.cols != x.size()) throw input_error("apply_rowmatrix: length mismatch");
    std::vector<double> y(q.rows, 0.0);
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double* row = q.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < q.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// Q A Qᵀ
inline SymMatrix conjugate(const SymMatrix& a, const RowMatrix& q) {
    const std::size_t n = a.dim();
    if (q.rows != n || q.cols != n) throw input_error("conjugate: dimension mismatch");
    RowMatrix qa(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * a(k, j);
            qa(i, j) = acc;
        }
    SymMatrix r(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += qa(i, k) * q(j, k);
            r.set(i, j, acc);
        }
    return r;
}

// --- seeded random fixtures ---

inline SymMatrix random_symmetric(std::size_t n, RngStream& rng, double scale = 1.0) {
    SymMatrix a(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) a.set(i, j, scale * rng.gaussian());
    return a;
}

inline SymMatrix random_zero_diag(std::size_t n, RngStream& rng, double scale = 1.0) {
    SymMatrix a = random_symmetric(n, rng, scale);
    for (std::size_t i = 0; i < n; ++i) a.set(i, i, 0.0);
    return a;
}

// Wishart-style G Gᵀ / n; PSD by construction.
inline SymMatrix random_psd(std::size_t n, RngStream& rng, double scale = 1.0) {
    RowMatrix g(n, n);
    for (double& v : g.data) v = rng.gaussian();
    SymMatrix a(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += g(i, k) * g(j, k);
            a.set(i, j, scale * acc / static_cast<double>(n));
        }
    return a;
}

// Householder QR of a Gaussian matrix, signs fixed so Q is Haar-distributed.
inline RowMatrix random_rotation(std::size_t n, RngStream& rng) {
    RowMatrix g(n, n);
    for (double& v : g.data) v = rng.gaussian();
    // Gram-Schmidt with re-orthogonalization; adequate at desk scale.
    RowMatrix q(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = g(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * v[i];
                for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q(i, k);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw domain_error("random_rotation: degenerate column");
        const double sign = v[j] >= 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < n; ++i) q(i, j) = sign * v[i] / norm;
    }
    return q;
}

// --- text fixture format: first line dim, then dim rows of dim decimals ---

inline std::string to_text(const SymMatrix& a) {
    std::ostringstream os;
    os << a.dim() << "\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < a.dim(); ++i) {
        for (std::size_t j = 0; j < a.dim(); ++j) {
            if (j) os << ' ';
            os << a(i, j);
        }
        os << "\n";
    }
    return os.str();
}

inline SymMatrix from_text(std::istream& in) {
    std::size_t dim = 0;
    if (!(in >> dim) || dim == 0) throw input_error("matrix text: bad dimension line");
    std::vector<double> entries(dim * dim);
    for (double& v : entries)
        if (!(in >> v)) throw input_error("matrix text: truncated entries");
    return SymMatrix(dim, std::move(entries));
}

inline SymMatrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open matrix file: " + path);
    return from_text(in);
}

inline void save_matrix(const SymMatrix& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write matrix file: " + path);
    out << to_text(a);
}

}  // namespace conclab::linalg
