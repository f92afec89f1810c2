#pragma once

namespace earpipe::stats {

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

/// Student t cumulative distribution.
double t_cdf(double t, double dof);
/// Two-sided p-value P(|T| >= |t|).
double t_two_sided_p(double t, double dof);
/// Upper tail of the F distribution, P(F >= f).
double f_sf(double f, double dof1, double dof2);

} // namespace earpipe::stats
