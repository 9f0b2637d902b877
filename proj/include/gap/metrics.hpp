#pragma once

#include <vector>

namespace gap::metrics {

// ROC AUC via the rank statistic with midranks for ties.  Throws
// ArgumentError when either class is empty.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Two-sample Kolmogorov-Smirnov distance.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Pearson chi-square statistic for observed counts against equal expected
// counts.
double chi2_uniform(const std::vector<int>& counts);

double mean(const std::vector<double>& x);
double sample_std(const std::vector<double>& x);  // (n-1) denominator

}  // namespace gap::metrics
