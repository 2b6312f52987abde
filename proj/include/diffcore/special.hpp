#pragma once

namespace diffcore {

// Digamma / trigamma via upward recurrence to x > 6 plus the asymptotic
// series; accurate to ~1e-12 for x > 0, which covers the Beta policy range
// (parameters are structurally > 1).
double digamma(double x);
double trigamma(double x);

// log Beta(a, b) = lgamma(a) + lgamma(b) - lgamma(a + b)
double log_beta(double a, double b);

// Numerically stable log(sum(exp(x_i))).
double log_sum_exp(const double* x, int n);

double softplus(double x);
double sigmoid(double x);

}  // namespace diffcore
