#pragma once

#include <vector>

namespace quadfield {

/// One-dimensional rule on [-1, 1].
struct GaussRule {
  std::vector<double> points;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule (1 <= n <= 64). Cached; safe to call concurrently.
const GaussRule& gauss_legendre(int n);

/// n-point Gauss-Lobatto-Legendre rule (2 <= n <= 64).
const GaussRule& gauss_lobatto(int n);

/// Orthonormal Jacobi polynomial P_n^{(alpha,beta)} and its derivative.
double jacobi_p(double x, double alpha, double beta, int n);
double jacobi_p_grad(double x, double alpha, double beta, int n);

}  // namespace quadfield
