#pragma once

// Small deterministic dense kernel: row-major matrices, a transposing GEMM,
// elementwise add/scale, reproducible random fill and a relative difference
// norm. Enough to execute every LoRA forward/backward graph on the CPU.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lorachain/errors.hpp"

namespace lorachain {

/// Environment variable that pins the number of matmul worker threads.
inline constexpr const char* kThreadsEnvVar = "LORACHAIN_NUM_THREADS";

enum class Trans : bool { N = false, T = true };

/// Per-invocation execution counters. The FLOP convention is 2*m*k*n per
/// product; elementwise sums are not counted.
struct ExecStats {
    std::uint64_t flops = 0;
    std::uint64_t workspace_elements = 0;
};

/// Execution context threaded through every kernel call.
/// threads == 0 means "take the default" (env var, else hardware threads).
struct Exec {
    ExecStats* stats = nullptr;
    unsigned threads = 0;

    void count_flops(std::uint64_t n) const {
        if (stats) stats->flops += n;
    }
    void count_workspace(std::uint64_t n) const {
        if (stats) stats->workspace_elements += n;
    }
};

inline unsigned default_threads() {
    if (const char* env = std::getenv(kThreadsEnvVar); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != checked_size(rows, cols)) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
        }
    }

    /// Builds from nested rows; every row must have the same length.
    Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(checked_size(rows_, cols_));
        for (const auto& row : rows) {
            if (row.size() != cols_) throw ShapeError("ragged initializer for Matrix");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t k = 0; k < n; ++k) m(k, k) = T{1};
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        return data_[r * cols_ + c];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    static std::size_t checked_size(std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) {
            throw ShapeError("matrix dimensions must be positive, got " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        }
        if (cols > SIZE_MAX / rows) throw ShapeError("matrix too large");
        return rows * cols;
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

namespace detail {

template <typename T>
std::size_t eff_rows(const Matrix<T>& m, Trans t) {
    return t == Trans::T ? m.cols() : m.rows();
}
template <typename T>
std::size_t eff_cols(const Matrix<T>& m, Trans t) {
    return t == Trans::T ? m.rows() : m.cols();
}

inline std::string eff_shape(std::size_t r, std::size_t c, Trans t) {
    return std::to_string(r) + "x" + std::to_string(c) + (t == Trans::T ? " (transposed)" : "");
}

// Computes rows [row_begin, row_end) of out += op(a) * op(b). Every output
// element accumulates its k terms in ascending order, so the result does not
// depend on how rows are split between threads.
template <typename T>
void gemm_rows(const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb, Matrix<T>& out,
               std::size_t row_begin, std::size_t row_end) {
    const std::size_t inner = eff_cols(a, ta);
    const std::size_t n = out.cols();
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    T* cd = out.data().data();
    const std::size_t lda = a.cols();
    const std::size_t ldb = b.cols();

    if (tb == Trans::N) {
        // i-k-j: streams rows of b and c.
        for (std::size_t i = row_begin; i < row_end; ++i) {
            T* crow = cd + i * n;
            for (std::size_t k = 0; k < inner; ++k) {
                const T aik = ta == Trans::N ? ad[i * lda + k] : ad[k * lda + i];
                const T* brow = bd + k * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    } else {
        // op(b)(k, j) = b(j, k): dot products over contiguous rows of b.
        for (std::size_t i = row_begin; i < row_end; ++i) {
            T* crow = cd + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T* brow = bd + j * ldb;
                T acc = crow[j];
                if (ta == Trans::N) {
                    const T* arow = ad + i * lda;
                    for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
                } else {
                    for (std::size_t k = 0; k < inner; ++k) acc += ad[k * lda + i] * brow[k];
                }
                crow[j] = acc;
            }
        }
    }
}

} // namespace detail

/// out += op(a) * op(b). The accumulating form lets callers build sums such
/// as dY W^T + Z A^T without a second temporary.
template <typename T>
void matmul_acc(Matrix<T>& out, const Matrix<T>& a, const Matrix<T>& b, Trans ta = Trans::N,
                Trans tb = Trans::N, const Exec& exec = {}) {
    const std::size_t m = detail::eff_rows(a, ta);
    const std::size_t k = detail::eff_cols(a, ta);
    const std::size_t kb = detail::eff_rows(b, tb);
    const std::size_t n = detail::eff_cols(b, tb);
    if (k != kb) {
        throw ShapeError("matmul inner dimension mismatch: " + detail::eff_shape(m, k, ta) +
                         " * " + detail::eff_shape(kb, n, tb));
    }
    if (out.rows() != m || out.cols() != n) {
        throw ShapeError("matmul output is " + out.shape_string() + ", expected " +
                         std::to_string(m) + "x" + std::to_string(n));
    }
    exec.count_flops(2ull * m * k * n);

    unsigned threads = exec.threads ? exec.threads : default_threads();
    // Below ~256k multiply-adds thread start-up dominates.
    if (threads <= 1 || m < 2 || static_cast<double>(m) * k * n < 262144.0) {
        detail::gemm_rows(a, ta, b, tb, out, 0, m);
        return;
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, m));
    const std::size_t chunk = (m + threads - 1) / threads;
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t begin = 0; begin < m; begin += chunk) {
        const std::size_t end = std::min(m, begin + chunk);
        pool.emplace_back([&, begin, end] { detail::gemm_rows(a, ta, b, tb, out, begin, end); });
    }
}

/// op(a) * op(b) into a fresh matrix.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b, Trans ta = Trans::N,
                 Trans tb = Trans::N, const Exec& exec = {}) {
    const std::size_t m = detail::eff_rows(a, ta);
    const std::size_t n = detail::eff_cols(b, tb);
    if (detail::eff_cols(a, ta) != detail::eff_rows(b, tb)) {
        throw ShapeError("matmul inner dimension mismatch: " +
                         detail::eff_shape(m, detail::eff_cols(a, ta), ta) + " * " +
                         detail::eff_shape(detail::eff_rows(b, tb), n, tb));
    }
    Matrix<T> out(m, n);
    matmul_acc(out, a, b, ta, tb, exec);
    return out;
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
    }
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t k = 0; k < ad.size(); ++k) ad[k] += bd[k];
}

template <typename T>
Matrix<T> add(Matrix<T> a, const Matrix<T>& b) {
    add_inplace(a, b);
    return a;
}

template <typename T>
Matrix<T> scale(Matrix<T> a, T factor) {
    for (T& v : a.data()) v *= factor;
    return a;
}

/// Reproducible uniform fill in [-scale, scale).
///
/// Generator: std::mt19937_64 seeded with `seed` directly; each draw x maps
/// to u = (x >> 11) * 2^-53 in [0, 1) and the element is scale * (2u - 1),
/// filled in row-major order. Both the engine and the mapping are fully
/// specified, so fixtures are stable across standard libraries.
template <typename T = double>
Matrix<T> fill_random(std::size_t rows, std::size_t cols, std::uint64_t seed,
                      double scale = 1.0) {
    Matrix<T> m(rows, cols);
    std::mt19937_64 gen(seed);
    for (T& v : m.data()) {
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        v = static_cast<T>(scale * (2.0 * u - 1.0));
    }
    return m;
}

inline constexpr double kRelDiffFloor = 1e-12;

/// max_ij |a - b| / max(|a|, |b|, 1e-12).
template <typename T>
double max_rel_diff(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_rel_diff shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string());
    }
    double worst = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t k = 0; k < ad.size(); ++k) {
        const double x = ad[k];
        const double y = bd[k];
        const double denom = std::max({std::abs(x), std::abs(y), kRelDiffFloor});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

/// max_ij |a - b| / max(scale_ij, 1e-12). With scale = |X||Y|-style
/// magnitudes this is the componentwise rounding-error ratio, which stays
/// bounded under cancellation where max_rel_diff does not.
template <typename T>
double max_scaled_diff(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& scale) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != scale.rows() ||
        a.cols() != scale.cols()) {
        throw ShapeError("max_scaled_diff shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string() + " vs " + scale.shape_string());
    }
    double worst = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    auto sd = scale.data();
    for (std::size_t k = 0; k < ad.size(); ++k) {
        const double denom = std::max(std::abs(static_cast<double>(sd[k])), kRelDiffFloor);
        worst = std::max(worst, std::abs(static_cast<double>(ad[k]) - static_cast<double>(bd[k])) / denom);
    }
    return worst;
}

template <typename T>
Matrix<T> abs_entries(Matrix<T> m) {
    for (T& v : m.data()) v = std::abs(v);
    return m;
}

template <typename T>
double max_abs(const Matrix<T>& a) {
    double m = 0.0;
    for (T v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

template <typename To, typename From>
Matrix<To> convert(const Matrix<From>& m) {
    std::vector<To> data(m.data().begin(), m.data().end());
    return Matrix<To>(m.rows(), m.cols(), std::move(data));
}

} // namespace lorachain
