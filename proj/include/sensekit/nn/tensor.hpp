#pragma once

#include <sensekit/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace sensekit::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// A batch of sequences stored as one matrix [dim x steps*batch]; column
/// t*batch + b holds step t of sequence b.
template <typename T>
struct Sequence {
    int steps = 0;
    int batch = 0;
    Mat<T> data;

    Sequence() = default;
    Sequence(int dim, int steps_, int batch_) : steps(steps_), batch(batch_), data(Mat<T>::Zero(dim, steps_ * batch_)) {}

    int dim() const { return static_cast<int>(data.rows()); }
    auto step(int t) { return data.middleCols(static_cast<Eigen::Index>(t) * batch, batch); }
    auto step(int t) const { return data.middleCols(static_cast<Eigen::Index>(t) * batch, batch); }

    /// Single sequence from a row-per-step matrix [steps x dim].
    static Sequence from_rows(const Mat<T>& rows) {
        Sequence s(static_cast<int>(rows.cols()), static_cast<int>(rows.rows()), 1);
        s.data = rows.transpose();
        return s;
    }

    /// Row-per-step matrix of sequence b.
    Mat<T> rows(int b = 0) const {
        Mat<T> out(steps, dim());
        for (int t = 0; t < steps; ++t) out.row(t) = data.col(static_cast<Eigen::Index>(t) * batch + b).transpose();
        return out;
    }
};

template <typename T>
Sequence<T> reverse_time(const Sequence<T>& s) {
    Sequence<T> out(s.dim(), s.steps, s.batch);
    for (int t = 0; t < s.steps; ++t) out.step(t) = s.step(s.steps - 1 - t);
    return out;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    return (T(1) / (T(1) + (-a.array()).exp())).matrix();
}

template <typename Derived>
auto tanh_of(const Eigen::MatrixBase<Derived>& a) {
    return a.array().tanh().matrix();
}

/// Column-wise softmax.
template <typename T>
Mat<T> softmax(const Mat<T>& logits) {
    Mat<T> out(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const T m = logits.col(j).maxCoeff();
        auto e = (logits.col(j).array() - m).exp();
        out.col(j) = (e / e.sum()).matrix();
    }
    return out;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
    return m.allFinite();
}

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

} // namespace sensekit::nn
