#include "quadfield/quadrature.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace quadfield {

namespace {

constexpr int kMaxPoints = 64;

// Legendre P_n(x) and P_n'(x) by the three-term recurrence.
void legendre(int n, double x, double* p, double* dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) { *p = 1.0; *dp = 0.0; return; }
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  *p = p1;
  *dp = n * (x * p1 - p0) / (x * x - 1.0);
}

GaussRule build_gauss(int n) {
  GaussRule r;
  r.points.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      legendre(n, x, &p, &dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(n, x, &p, &dp);
    r.points[n - 1 - i] = x;
    r.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

// Interior Lobatto nodes are the roots of P'_{n-1}; found by Newton on
// (1-x^2) P'_{n-1} starting from Chebyshev-Gauss-Lobatto points.
GaussRule build_lobatto(int n) {
  GaussRule r;
  r.points.resize(n);
  r.weights.resize(n);
  const int N = n - 1;
  for (int i = 0; i < n; ++i) {
    double x = -std::cos(std::numbers::pi * i / N);
    if (i > 0 && i < N) {
      for (int it = 0; it < 100; ++it) {
        // P_N and its first two derivatives.
        double p = 0.0, dp = 0.0;
        legendre(N, x, &p, &dp);
        const double d2p = (2.0 * x * dp - N * (N + 1.0) * p) / (1.0 - x * x);
        const double dx = dp / d2p;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
    }
    double p = 0.0, dp = 0.0;
    if (i == 0 || i == N) {
      p = (i == 0 && N % 2 == 1) ? -1.0 : 1.0;
    } else {
      legendre(N, x, &p, &dp);
    }
    r.points[i] = x;
    r.weights[i] = 2.0 / (N * (N + 1.0) * p * p);
  }
  return r;
}

struct RuleTables {
  std::array<GaussRule, kMaxPoints + 1> gauss;
  std::array<GaussRule, kMaxPoints + 1> lobatto;
  RuleTables() {
    for (int n = 1; n <= kMaxPoints; ++n) gauss[n] = build_gauss(n);
    for (int n = 2; n <= kMaxPoints; ++n) lobatto[n] = build_lobatto(n);
  }
};

const RuleTables& tables() {
  static const RuleTables t;
  return t;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  if (n < 1 || n > kMaxPoints) throw std::out_of_range("gauss_legendre: unsupported point count");
  return tables().gauss[n];
}

const GaussRule& gauss_lobatto(int n) {
  if (n < 2 || n > kMaxPoints) throw std::out_of_range("gauss_lobatto: unsupported point count");
  return tables().lobatto[n];
}

double jacobi_p(double x, double alpha, double beta, int n) {
  const double g0 = std::pow(2.0, alpha + beta + 1.0) / (alpha + beta + 1.0) * std::tgamma(alpha + 1.0) *
                    std::tgamma(beta + 1.0) / std::tgamma(alpha + beta + 1.0);
  double pm1 = 1.0 / std::sqrt(g0);
  if (n == 0) return pm1;
  const double g1 = (alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0) * g0;
  double p = ((alpha + beta + 2.0) * x / 2.0 + (alpha - beta) / 2.0) / std::sqrt(g1);
  if (n == 1) return p;
  double aold = 2.0 / (2.0 + alpha + beta) *
                std::sqrt((alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0));
  for (int i = 1; i < n; ++i) {
    const double h1 = 2.0 * i + alpha + beta;
    const double anew = 2.0 / (h1 + 2.0) *
                        std::sqrt((i + 1.0) * (i + 1.0 + alpha + beta) * (i + 1.0 + alpha) *
                                  (i + 1.0 + beta) / (h1 + 1.0) / (h1 + 3.0));
    const double bnew = -(alpha * alpha - beta * beta) / h1 / (h1 + 2.0);
    const double pn = 1.0 / anew * (-aold * pm1 + (x - bnew) * p);
    pm1 = p;
    p = pn;
    aold = anew;
  }
  return p;
}

double jacobi_p_grad(double x, double alpha, double beta, int n) {
  if (n == 0) return 0.0;
  return std::sqrt(n * (n + alpha + beta + 1.0)) * jacobi_p(x, alpha + 1.0, beta + 1.0, n - 1);
}

}  // namespace quadfield
