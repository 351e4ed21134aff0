#pragma once

#include <stdexcept>
#include <vector>

namespace imitate::stats {

/// Raised when a test statistic is undefined for the given data
/// (e.g. all paired differences are zero).
class UndefinedStatisticError : public std::runtime_error {
public:
    explicit UndefinedStatisticError(const std::string& msg) : std::runtime_error(msg) {}
};

struct WilcoxonResult {
    double p_value = 1.0;
    double w_plus = 0.0;
    int n_used = 0;   // pairs remaining after zero differences are dropped
    bool exact = false;
};

/// Two-sided Wilcoxon signed-rank test on paired series. Zero differences
/// are dropped; ties get average ranks. Exact enumeration of the signed-rank
/// distribution for n <= 25 (dynamic programming over the doubled ranks),
/// normal approximation with tie correction beyond that.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

}  // namespace imitate::stats
