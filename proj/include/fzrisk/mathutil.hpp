#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

namespace fzrisk {

// ====================== scalar distributions ======================

// Standard normal density.
double norm_pdf(double x);

// Standard normal CDF, accurate in both tails.
double norm_cdf(double x);

// Inverse standard normal CDF. p must lie in (0, 1).
double norm_quantile(double p);

// CDF of the Student-t distribution with nu degrees of freedom.
double student_t_cdf(double x, double nu);

// Inverse CDF of the Student-t distribution with nu degrees of freedom.
double student_t_quantile(double p, double nu);

// Survival function of the chi-squared distribution with k degrees of
// freedom: P(X > x).
double chi2_sf(double x, double k);

// ====================== summation ======================

// Neumaier-compensated accumulator. Results depend only on the order in
// which values are added, which keeps reductions reproducible.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Compensated mean over a span, summed in index order.
double compensated_mean(std::span<const double> xs);

// ====================== formatting ======================

// printf-style formatting into a std::string.
std::string strprintf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

// Shortest decimal representation that round-trips to the same double.
std::string format_roundtrip(double x);

} // namespace fzrisk
