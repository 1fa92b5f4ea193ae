#pragma once

#include <span>

#include "exprsaug/matrix.hpp"

// Dense kernels behind the neural classifier and the attribution code.
//
// The top-level functions are OpenMP-parallel. Every output element is
// produced by exactly one thread with a fixed summation order, so results are
// bit-identical for any thread count. The `serial` namespace holds plain
// reference loops used by the tests and the benchmark; they agree with the
// parallel kernels up to floating-point reassociation.

namespace exprsaug::kernels {

struct AdamCoefficients {
    double learning_rate;
    double beta1;
    double beta2;
    double epsilon;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

/// Z = X W^T + bias. X: n x in, W: out x in, Z resized to n x out.
void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& z);

/// dW = dZ^T A, dBias = column sums of dZ. dZ: n x out, A: n x in.
void weight_gradient(const Matrix& dz, const Matrix& a, Matrix& dw, std::span<double> dbias);

/// dA = dZ W. dZ: n x out, W: out x in, dA resized to n x in.
void input_gradient(const Matrix& dz, const Matrix& w, Matrix& da);

/// In-place Adam update of one parameter block.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c);

namespace serial {

void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& z);
void weight_gradient(const Matrix& dz, const Matrix& a, Matrix& dw, std::span<double> dbias);
void input_gradient(const Matrix& dz, const Matrix& w, Matrix& da);
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c);

}  // namespace serial

}  // namespace exprsaug::kernels
