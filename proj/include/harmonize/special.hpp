#pragma once

// Special functions used across the library: incomplete gamma and beta
// functions and their inverses.

namespace harmonize::special {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly
// in the tail to avoid cancellation.
double gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b).
double beta_inc(double x, double a, double b);
// Inverse of I_x(a, b) in x. Bracketed Newton with bisection fallback.
double beta_inc_inv(double u, double a, double b);

// log B(a, b)
double log_beta(double a, double b);

// Beta(a, b) density.
double beta_pdf(double x, double a, double b);

}  // namespace harmonize::special
