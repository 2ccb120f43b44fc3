#pragma once

// Dense 64-bit linear algebra: row-major containers, products, norms and a
// one-sided Jacobi SVD. Sizes here are small (a few hundred at most), so
// everything is straightforward loops.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "more/errors.hpp"
#include "more/rng.hpp"

namespace more {

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw StructuralError(std::string(what) + ": non-finite entry");
        }
    }
}

}  // namespace detail

class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw StructuralError("DenseMatrix: data length " + std::to_string(data_.size()) +
                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
        detail::require_finite(data_, "DenseMatrix");
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw StructuralError("from_rows: ragged rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return DenseMatrix(r, c, std::move(data));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t len) : data_(len, 0.0) {}
    explicit Vector(std::vector<double> data) : data_(std::move(data)) {
        detail::require_finite(data_, "Vector");
    }

    std::size_t len() const noexcept { return data_.size(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

struct SvdResult {
    DenseMatrix u;                         // rows x k
    std::vector<double> singular_values;   // length k, non-increasing
    DenseMatrix vt;                        // k x cols
};

struct TruncatedSvd {
    SvdResult factors;
    double residual = 0.0;  // sum of squared discarded singular values
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw StructuralError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

inline std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw StructuralError("matvec: dimension mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto row = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b, double beta = 1.0) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw StructuralError("add: shape mismatch");
    DenseMatrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += beta * bd[i];
    return c;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) { return add(a, b, -1.0); }

inline DenseMatrix scale(const DenseMatrix& a, double alpha) {
    DenseMatrix c = a;
    for (double& v : c.data()) v *= alpha;
    return c;
}

inline double fro_norm_sq(const DenseMatrix& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return acc;
}

inline double fro_norm(const DenseMatrix& a) { return std::sqrt(fro_norm_sq(a)); }

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw StructuralError("max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

inline DenseMatrix slice(const DenseMatrix& a, std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) {
    if (r0 + rows > a.rows() || c0 + cols > a.cols()) throw StructuralError("slice: out of range");
    DenseMatrix s(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) s(i, j) = a(r0 + i, c0 + j);
    return s;
}

inline DenseMatrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal(0.0, stddev);
    return m;
}

namespace detail {

constexpr std::size_t kJacobiMaxSweeps = 100;
constexpr double kJacobiTol = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Column-oriented one-sided Jacobi for a tall matrix (rows >= cols). The
// input arrives transposed so each column is a contiguous row of `work`.
inline SvdResult jacobi_tall(DenseMatrix work) {
    const std::size_t n = work.rows();  // number of columns of the original
    const std::size_t m = work.cols();  // column length
    DenseMatrix v = DenseMatrix::identity(n);  // row c holds column c of V

    std::size_t sweep = 0;
    for (; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto wp = work.row(p);
                auto wq = work.row(q);
                const double alpha = dot(wp, wp);
                const double beta = dot(wq, wq);
                const double gamma = dot(wp, wq);
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i], y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                auto vp = v.row(p);
                auto vq = v.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == kJacobiMaxSweeps) {
        throw NumericalError("svd: Jacobi did not converge after " + std::to_string(sweep) + " sweeps", sweep);
    }

    std::vector<double> sigma(n);
    for (std::size_t c = 0; c < n; ++c) sigma[c] = std::sqrt(dot(work.row(c), work.row(c)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    const double top = n == 0 ? 0.0 : sigma[order[0]];
    SvdResult out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
    std::vector<std::size_t> to_complete;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t c = order[k];
        const double s = sigma[c];
        if (s == 0.0 || s <= top * 1e-200) {
            out.singular_values[k] = 0.0;
            to_complete.push_back(k);
        } else {
            out.singular_values[k] = s;
            auto col = work.row(c);
            for (std::size_t i = 0; i < m; ++i) out.u(i, k) = col[i] / s;
        }
        auto vrow = v.row(c);
        for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = vrow[i];
    }

    // Zero singular values leave u columns undetermined: fill them with an
    // orthonormal completion so u keeps orthonormal columns.
    for (std::size_t k : to_complete) {
        std::vector<double> best;
        double best_norm = -1.0;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<double> cand(m, 0.0);
            cand[e] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == k) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += out.u(i, j) * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, j);
                }
            }
            const double nrm = std::sqrt(dot(cand, cand));
            if (nrm > best_norm) {
                best_norm = nrm;
                best = std::move(cand);
            }
            if (best_norm > 0.7) break;
        }
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = best[i] / best_norm;
    }
    return out;
}

inline void apply_sign_convention(SvdResult& r) {
    const std::size_t k = r.singular_values.size();
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t arg = 0;
        double mag = -1.0;
        for (std::size_t i = 0; i < r.u.rows(); ++i) {
            if (std::abs(r.u(i, c)) > mag) {
                mag = std::abs(r.u(i, c));
                arg = i;
            }
        }
        if (r.u.rows() > 0 && r.u(arg, c) < 0.0) {
            for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, c) = -r.u(i, c);
            for (std::size_t j = 0; j < r.vt.cols(); ++j) r.vt(c, j) = -r.vt(c, j);
        }
    }
}

}  // namespace detail

// Thin SVD a = u diag(s) vt with k = min(rows, cols). Each left singular
// vector has its largest-magnitude entry positive.
inline SvdResult svd(const DenseMatrix& a) {
    if (a.rows() > 4096 || a.cols() > 4096) throw StructuralError("svd: dimensions above 4096");
    detail::require_finite(a.data(), "svd");
    SvdResult r;
    if (a.rows() >= a.cols()) {
        r = detail::jacobi_tall(transpose(a));
    } else {
        // a^T = u' s vt'  =>  a = vt'^T s u'^T
        SvdResult t = detail::jacobi_tall(a);
        r.u = transpose(t.vt);
        r.singular_values = std::move(t.singular_values);
        r.vt = transpose(t.u);
    }
    detail::apply_sign_convention(r);
    return r;
}

inline TruncatedSvd truncated_svd(const DenseMatrix& a, std::size_t q) {
    const std::size_t k = std::min(a.rows(), a.cols());
    if (q > k) {
        throw StructuralError("truncated_svd: q=" + std::to_string(q) + " exceeds min(rows, cols)=" + std::to_string(k));
    }
    if (q == 0) {
        return {SvdResult{DenseMatrix(a.rows(), 0), {}, DenseMatrix(0, a.cols())}, fro_norm_sq(a)};
    }
    SvdResult full = svd(a);
    double residual = 0.0;
    for (std::size_t i = k; i-- > q;) residual += full.singular_values[i] * full.singular_values[i];

    TruncatedSvd out;
    out.residual = residual;
    out.factors.u = slice(full.u, 0, 0, a.rows(), q);
    out.factors.vt = slice(full.vt, 0, 0, q, a.cols());
    out.factors.singular_values.assign(full.singular_values.begin(), full.singular_values.begin() + q);
    return out;
}

inline double spectral_norm(const DenseMatrix& a) {
    if (a.size() == 0) return 0.0;
    return svd(a).singular_values.front();
}

inline std::size_t numerical_rank(const DenseMatrix& a, double rel_tol) {
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw StructuralError("numerical_rank: rel_tol must lie in (0,1)");
    if (a.size() == 0) return 0;
    const auto s = svd(a).singular_values;
    if (s.front() == 0.0) return 0;
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [&](double v) { return v > rel_tol * s.front(); }));
}

// u diag(s) vt
inline DenseMatrix reconstruct(const SvdResult& r) {
    DenseMatrix us = r.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.singular_values[j];
    return matmul(us, r.vt);
}

// ---- Matrix text format -------------------------------------------------
// Line 1 "rows,cols", then one comma-separated line per row, 17 significant
// digits.

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_matrix_text(std::ostream& os, const DenseMatrix& a) {
    os << a.rows() << ',' << a.cols() << '\n';
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (j) os << ',';
            os << format_double(a(i, j));
        }
        os << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    for (auto& s : out) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
        std::size_t lead = 0;
        while (lead < s.size() && (s[lead] == ' ' || s[lead] == '\t')) ++lead;
        s.erase(0, lead);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& tok, const std::string& where) {
    T value{};
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && tok[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || tok.empty()) {
        throw StructuralError("matrix text: cannot parse '" + tok + "' at " + where);
    }
    return value;
}

}  // namespace detail

inline DenseMatrix read_matrix_text(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw StructuralError("matrix text: missing header line");
    const auto header = detail::split_commas(line);
    if (header.size() != 2) throw StructuralError("matrix text: header must be 'rows,cols'");
    const auto rows = detail::parse_number<std::size_t>(header[0], "header");
    const auto cols = detail::parse_number<std::size_t>(header[1], "header");
    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) throw StructuralError("matrix text: expected " + std::to_string(rows) + " rows");
        const auto toks = detail::split_commas(line);
        if (toks.size() != cols) {
            throw StructuralError("matrix text: row " + std::to_string(i) + " has " + std::to_string(toks.size()) +
                                  " entries, expected " + std::to_string(cols));
        }
        for (std::size_t j = 0; j < cols; ++j) {
            data.push_back(detail::parse_number<double>(toks[j], "row " + std::to_string(i)));
        }
    }
    return DenseMatrix(rows, cols, std::move(data));
}

}  // namespace more
