#pragma once

// Executable LoRA graphs. Forward: Y = XW + XAB under two bracketings.
// Backward: the five executable bracketings of
//   dA = X^T dY B^T,  dB = A^T X^T dY,  dX = dY W^T + dY B^T A^T.
// None of the forward variants retains XA; every backward variant works from
// X, W, A, B and dY only.

#include <algorithm>
#include <cmath>
#include <string>

#include "lorachain/costmodel.hpp"
#include "lorachain/dense.hpp"

namespace lorachain {

/// Frozen weight W (i x o) plus trainable factors A (i x r) and B (r x o).
template <typename T>
class LoraLayer {
public:
    LoraLayer(Matrix<T> w, Matrix<T> a, Matrix<T> b)
        : w_(std::move(w)), a_(std::move(a)), b_(std::move(b)) {
        if (w_.rows() != a_.rows() || w_.cols() != b_.cols() || a_.cols() != b_.rows()) {
            throw ShapeError("inconsistent LoRA layer: W " + w_.shape_string() + ", A " +
                             a_.shape_string() + ", B " + b_.shape_string());
        }
    }

    const Matrix<T>& w() const noexcept { return w_; }
    const Matrix<T>& a() const noexcept { return a_; }
    const Matrix<T>& b() const noexcept { return b_; }
    Matrix<T>& mutable_a() noexcept { return a_; }
    Matrix<T>& mutable_b() noexcept { return b_; }

    std::size_t in_dim() const noexcept { return w_.rows(); }
    std::size_t out_dim() const noexcept { return w_.cols(); }
    std::size_t rank() const noexcept { return a_.cols(); }

private:
    Matrix<T> w_, a_, b_;
};

template <typename T>
struct Gradients {
    Matrix<T> dA; // i x r
    Matrix<T> dB; // r x o
    Matrix<T> dX; // (b*s) x i
};

/// Random layer with all factors drawn from fill_random. Seeds: W <- seed,
/// A <- seed + 1, B <- seed + 2.
template <typename T = double>
LoraLayer<T> random_layer(std::size_t in, std::size_t out, std::size_t rank, std::uint64_t seed,
                          double scale = 1.0) {
    return LoraLayer<T>(fill_random<T>(in, out, seed, scale),
                        fill_random<T>(in, rank, seed + 1, scale),
                        fill_random<T>(rank, out, seed + 2, scale));
}

namespace detail {

template <typename T>
void check_input(const Matrix<T>& x, const LoraLayer<T>& layer) {
    if (x.cols() != layer.in_dim()) {
        throw ShapeError("input X is " + x.shape_string() + " but layer expects " +
                         std::to_string(layer.in_dim()) + " columns");
    }
}

template <typename T>
void check_cotangent(const Matrix<T>& x, const LoraLayer<T>& layer, const Matrix<T>& dy) {
    check_input(x, layer);
    if (dy.rows() != x.rows() || dy.cols() != layer.out_dim()) {
        throw ShapeError("dY is " + dy.shape_string() + ", expected " +
                         std::to_string(x.rows()) + "x" + std::to_string(layer.out_dim()));
    }
}

// W + AB, counted as one i x o temporary.
template <typename T>
Matrix<T> merged_weight(const LoraLayer<T>& layer, const Exec& exec) {
    Matrix<T> z = matmul(layer.a(), layer.b(), Trans::N, Trans::N, exec);
    add_inplace(z, layer.w());
    exec.count_workspace(z.size());
    return z;
}

} // namespace detail

/// F1: Y = XW + (XA)B.  F2: Y = X(W + AB).
template <typename T>
Matrix<T> forward(VariantId v, const Matrix<T>& x, const LoraLayer<T>& layer,
                  const Exec& exec = {}) {
    detail::check_input(x, layer);
    switch (v) {
    case VariantId::F1: {
        Matrix<T> y = matmul(x, layer.w(), Trans::N, Trans::N, exec);
        const Matrix<T> xa = matmul(x, layer.a(), Trans::N, Trans::N, exec);
        exec.count_workspace(xa.size());
        matmul_acc(y, xa, layer.b(), Trans::N, Trans::N, exec);
        return y;
    }
    case VariantId::F2: {
        const Matrix<T> merged = detail::merged_weight(layer, exec);
        return matmul(x, merged, Trans::N, Trans::N, exec);
    }
    default:
        throw UnsupportedVariantError(short_name(v) + " is not a forward variant");
    }
}

/// Executes backward variant B1..B5 line by line. B6..B8 throw.
template <typename T>
Gradients<T> backward(VariantId v, const Matrix<T>& x, const LoraLayer<T>& layer,
                      const Matrix<T>& dy, const Exec& exec = {}) {
    detail::check_cotangent(x, layer, dy);
    const auto& w = layer.w();
    const auto& a = layer.a();
    const auto& b = layer.b();
    constexpr Trans N = Trans::N;
    constexpr Trans T_ = Trans::T;

    switch (v) {
    case VariantId::B1: {
        const Matrix<T> z1 = matmul(dy, b, N, T_, exec);
        const Matrix<T> z2 = matmul(x, a, N, N, exec);
        exec.count_workspace(z1.size() + z2.size());
        Matrix<T> da = matmul(x, z1, T_, N, exec);
        Matrix<T> db = matmul(z2, dy, T_, N, exec);
        Matrix<T> dx = matmul(dy, w, N, T_, exec);
        matmul_acc(dx, z1, a, N, T_, exec);
        return {std::move(da), std::move(db), std::move(dx)};
    }
    case VariantId::B2: {
        const Matrix<T> z1 = matmul(dy, b, N, T_, exec);
        const Matrix<T> z2 = matmul(x, dy, T_, N, exec);
        exec.count_workspace(z1.size() + z2.size());
        Matrix<T> da = matmul(x, z1, T_, N, exec);
        Matrix<T> db = matmul(a, z2, T_, N, exec);
        Matrix<T> dx = matmul(dy, w, N, T_, exec);
        matmul_acc(dx, z1, a, N, T_, exec);
        return {std::move(da), std::move(db), std::move(dx)};
    }
    case VariantId::B3: {
        const Matrix<T> z1 = matmul(dy, b, N, T_, exec);
        const Matrix<T> z2 = matmul(x, dy, T_, N, exec);
        exec.count_workspace(z1.size() + z2.size());
        Matrix<T> da = matmul(z2, b, N, T_, exec);
        Matrix<T> db = matmul(a, z2, T_, N, exec);
        Matrix<T> dx = matmul(dy, w, N, T_, exec);
        matmul_acc(dx, z1, a, N, T_, exec);
        return {std::move(da), std::move(db), std::move(dx)};
    }
    case VariantId::B4: {
        const Matrix<T> z1 = detail::merged_weight(layer, exec);
        const Matrix<T> z2 = matmul(x, dy, T_, N, exec);
        exec.count_workspace(z2.size());
        Matrix<T> da = matmul(z2, b, N, T_, exec);
        Matrix<T> db = matmul(a, z2, T_, N, exec);
        Matrix<T> dx = matmul(dy, z1, N, T_, exec);
        return {std::move(da), std::move(db), std::move(dx)};
    }
    case VariantId::B5: {
        const Matrix<T> z1 = matmul(dy, b, N, T_, exec);
        const Matrix<T> z2 = matmul(x, a, N, N, exec);
        exec.count_workspace(z1.size() + z2.size());
        const Matrix<T> z3 = detail::merged_weight(layer, exec);
        Matrix<T> da = matmul(x, z1, T_, N, exec);
        Matrix<T> db = matmul(z2, dy, T_, N, exec);
        Matrix<T> dx = matmul(dy, z3, N, T_, exec);
        return {std::move(da), std::move(db), std::move(dx)};
    }
    case VariantId::B6:
    case VariantId::B7:
    case VariantId::B8:
        throw UnsupportedVariantError(short_name(v) +
                                      " is a cost-model-only variant and cannot be executed");
    default:
        throw UnsupportedVariantError(short_name(v) + " is not a backward variant");
    }
}

/// Analytic gradients in one fixed association order:
///   dA = X^T (dY B^T),  dB = A^T (X^T dY),  dX = dY W^T + (dY B^T) A^T.
template <typename T>
Gradients<T> reference_backward(const Matrix<T>& x, const LoraLayer<T>& layer,
                                const Matrix<T>& dy) {
    detail::check_cotangent(x, layer, dy);
    const Matrix<T> dy_bt = matmul(dy, layer.b(), Trans::N, Trans::T);
    const Matrix<T> xt_dy = matmul(x, dy, Trans::T, Trans::N);
    Matrix<T> da = matmul(x, dy_bt, Trans::T, Trans::N);
    Matrix<T> db = matmul(layer.a(), xt_dy, Trans::T, Trans::N);
    Matrix<T> dx = matmul(dy, layer.w(), Trans::N, Trans::T);
    add_inplace(dx, matmul(dy_bt, layer.a(), Trans::N, Trans::T));
    return {std::move(da), std::move(db), std::move(dx)};
}

/// Cache-XA execution used as the comparison baseline: the forward hands XA
/// back to the caller and the backward consumes it instead of recomputing.
template <typename T>
struct CachedForward {
    Matrix<T> y;
    Matrix<T> xa;
};

template <typename T>
CachedForward<T> baseline_forward(const Matrix<T>& x, const LoraLayer<T>& layer,
                                  const Exec& exec = {}) {
    detail::check_input(x, layer);
    Matrix<T> y = matmul(x, layer.w(), Trans::N, Trans::N, exec);
    Matrix<T> xa = matmul(x, layer.a(), Trans::N, Trans::N, exec);
    matmul_acc(y, xa, layer.b(), Trans::N, Trans::N, exec);
    return {std::move(y), std::move(xa)};
}

template <typename T>
Gradients<T> baseline_backward(const Matrix<T>& x, const LoraLayer<T>& layer, const Matrix<T>& dy,
                               const Matrix<T>& cached_xa, const Exec& exec = {}) {
    detail::check_cotangent(x, layer, dy);
    if (cached_xa.rows() != x.rows() || cached_xa.cols() != layer.rank()) {
        throw ShapeError("cached XA is " + cached_xa.shape_string());
    }
    const Matrix<T> z1 = matmul(dy, layer.b(), Trans::N, Trans::T, exec);
    exec.count_workspace(z1.size());
    Matrix<T> da = matmul(x, z1, Trans::T, Trans::N, exec);
    Matrix<T> db = matmul(cached_xa, dy, Trans::T, Trans::N, exec);
    Matrix<T> dx = matmul(dy, layer.w(), Trans::N, Trans::T, exec);
    matmul_acc(dx, z1, layer.a(), Trans::N, Trans::T, exec);
    return {std::move(da), std::move(db), std::move(dx)};
}

/// Worst error of one gradient tensor against its finite-difference estimate,
/// normalized by the tensor's largest magnitude:
///   max_k |fd_k - an_k| / max(|fd|_inf, |an|_inf, 1e-12).
/// Element-wise relative error is meaningless for entries that cancel to
/// ~0, so the tensor scale is the denominator.
struct FiniteDifferenceReport {
    double dA = 0.0;
    double dB = 0.0;
    double dX = 0.0;

    double worst() const { return std::max({dA, dB, dX}); }
};

namespace detail {

template <typename T>
T probe_loss(const Matrix<T>& x, const LoraLayer<T>& layer, const Matrix<T>& g) {
    const Matrix<T> y = forward(VariantId::F1, x, layer);
    T loss{0};
    auto yd = y.data();
    auto gd = g.data();
    for (std::size_t k = 0; k < yd.size(); ++k) loss += yd[k] * gd[k];
    if (!std::isfinite(loss)) throw NumericError("non-finite loss in finite-difference check");
    return loss;
}

// Central differences of the probe loss with respect to every element of
// `param`, which must alias storage read by `loss`.
template <typename T, typename Loss>
Matrix<T> central_differences(Matrix<T>& param, T h, Loss&& loss) {
    Matrix<T> out(param.rows(), param.cols());
    auto pd = param.data();
    auto od = out.data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
        const T saved = pd[k];
        pd[k] = saved + h;
        const T up = loss();
        pd[k] = saved - h;
        const T down = loss();
        pd[k] = saved;
        od[k] = (up - down) / (T{2} * h);
    }
    return out;
}

template <typename T>
double scaled_error(const Matrix<T>& fd, const Matrix<T>& analytic) {
    if (!fd.all_finite() || !analytic.all_finite())
        throw NumericError("non-finite gradient in finite-difference check");
    const double denom = std::max({max_abs(fd), max_abs(analytic), kRelDiffFloor});
    double worst = 0.0;
    for (std::size_t k = 0; k < fd.size(); ++k)
        worst = std::max(worst, std::abs(double(fd.data()[k]) - double(analytic.data()[k])));
    return worst / denom;
}

} // namespace detail

/// Checks a backward variant against central differences of
/// L = sum(Y .* G), Y = forward(F1). The gradients of L are exactly the
/// backward outputs with dY = G.
template <typename T>
FiniteDifferenceReport finite_difference_check(const Matrix<T>& x, const LoraLayer<T>& layer,
                                               const Matrix<T>& probe, T h,
                                               VariantId variant = VariantId::B1) {
    if (!(h > T{0})) throw NumericError("finite-difference step must be positive");
    detail::check_cotangent(x, layer, probe);
    if (!x.all_finite() || !probe.all_finite() || !layer.w().all_finite() ||
        !layer.a().all_finite() || !layer.b().all_finite()) {
        throw NumericError("non-finite input to finite-difference check");
    }
    const Gradients<T> g = backward(variant, x, layer, probe);

    LoraLayer<T> work = layer;
    Matrix<T> xw = x;
    auto loss = [&] { return detail::probe_loss(xw, work, probe); };

    FiniteDifferenceReport rep;
    rep.dA = detail::scaled_error(detail::central_differences(work.mutable_a(), h, loss), g.dA);
    rep.dB = detail::scaled_error(detail::central_differences(work.mutable_b(), h, loss), g.dB);
    rep.dX = detail::scaled_error(detail::central_differences(xw, h, loss), g.dX);
    return rep;
}

} // namespace lorachain
