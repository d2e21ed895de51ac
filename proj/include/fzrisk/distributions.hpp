#pragma once

#include <span>

#include "fzrisk/core.hpp"

namespace fzrisk {

// ====================== tail pairs ======================

// Quantile (a) and tail-mean (b) of a standardized distribution at a
// given left-tail level: a is the alpha-quantile and b the mean of the
// distribution conditional on falling at or below a. Always b <= a < 0
// for the levels and distributions used here.
struct TailPair {
    double a = 0.0;
    double b = 0.0;
};

void validate(const TailPair& pair);

// Tail pair of the standard normal: a = Phi^{-1}(alpha) and
// b = -phi(a) / alpha.
TailPair normal_tail_pair(AlphaLevel alpha);

// ====================== skewed Student-t ======================

// Parameters of the skewed Student-t with zero mean and unit variance:
// nu > 2 degrees of freedom and skewness lambda in (-1, 1). lambda = 0
// recovers the standardized (unit-variance) Student-t.
struct SkewtParams {
    double nu = 5.0;
    double lambda = 0.0;
};

void validate(const SkewtParams& params);

double skewt_pdf(double z, const SkewtParams& params);
double skewt_cdf(double z, const SkewtParams& params);

// Inverse CDF, exact up to floating point through the piecewise closed
// form in the Student-t quantile.
double skewt_quantile(double p, const SkewtParams& params);

// Mean and variance by adaptive quadrature; used to cross-check the
// standardization of the density.
double skewt_mean(const SkewtParams& params);
double skewt_variance(const SkewtParams& params);

// Tail pair of the skewed Student-t. The quantile comes from
// skewt_quantile; the tail mean integrates z * pdf(z) below it by
// adaptive quadrature to absolute tolerance 1e-8.
TailPair skewt_tail_pair(AlphaLevel alpha, const SkewtParams& params);

// ====================== empirical ======================

// Tail pair of a data sample: a is the order statistic of rank
// ceil(n * alpha) (the left-continuous empirical quantile) and b the
// mean of all observations <= a.
TailPair edf_tail_pair(std::span<const double> data, AlphaLevel alpha);

// Left-continuous empirical alpha-quantile of a sample (rank
// ceil(n * alpha) order statistic). Shared by edf_tail_pair and the
// rolling-window forecaster.
double empirical_quantile(std::span<const double> data, AlphaLevel alpha);

} // namespace fzrisk
