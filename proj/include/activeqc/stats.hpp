#pragma once
// Trial statistics: mean/SEM, Welch's unequal-variance t-test and ROC-AUC.

#include <span>
#include <vector>

namespace aqc::stats {

double mean(std::span<const double> x);
// Unbiased sample variance; 0 for fewer than two values.
double variance(std::span<const double> x);
// Standard error of the mean; 0 for fewer than two values.
double sem(std::span<const double> x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;           // two-sided, in (0, 1]
    bool degenerate = false;  // both variances zero with different means
};

// Needs >= 2 values per sample. Both variances zero: equal means give
// t = 0, p = 1; different means give p at the smallest positive double and
// `degenerate` set.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

// Area under the ROC curve for `scores` ranking positives above negatives;
// tied scores count one half. Throws ContractViolation when a class is empty.
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

} // namespace aqc::stats
