#include "imitate/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imitate/tensor.hpp"

namespace imitate::stats {

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    require(a.size() == b.size(), "paired series must have equal length");
    require(a.size() >= 6, "need at least 6 pairs");

    std::vector<double> diffs;
    diffs.reserve(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        double d = b[i] - a[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty())
        throw UndefinedStatisticError("all paired differences are zero");

    const int n = static_cast<int>(diffs.size());
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return std::abs(diffs[static_cast<size_t>(i)]) < std::abs(diffs[static_cast<size_t>(j)]);
    });

    // Average ranks for ties on |d|.
    std::vector<double> rank(static_cast<size_t>(n), 0.0);
    std::vector<int> tie_sizes;
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && std::abs(diffs[static_cast<size_t>(order[j])]) ==
                            std::abs(diffs[static_cast<size_t>(order[i])]))
            ++j;
        double avg = 0.5 * (i + 1 + j);  // mean of ranks i+1..j
        for (int k = i; k < j; ++k) rank[static_cast<size_t>(order[k])] = avg;
        tie_sizes.push_back(j - i);
        i = j;
    }

    double w_plus = 0.0;
    for (int i = 0; i < n; ++i)
        if (diffs[static_cast<size_t>(i)] > 0.0) w_plus += rank[static_cast<size_t>(i)];
    double w_minus = n * (n + 1) / 2.0 - w_plus;

    WilcoxonResult r;
    r.w_plus = w_plus;
    r.n_used = n;

    if (n <= 25) {
        // Exact null distribution of W+ over all 2^n sign assignments,
        // via the generating polynomial prod(1 + x^(2*rank_i)); doubling
        // makes half-integer average ranks integral.
        std::vector<int> scaled(static_cast<size_t>(n));
        long long total = 0;
        for (int i = 0; i < n; ++i) {
            scaled[static_cast<size_t>(i)] =
                static_cast<int>(std::llround(2.0 * rank[static_cast<size_t>(i)]));
            total += scaled[static_cast<size_t>(i)];
        }
        std::vector<double> ways(static_cast<size_t>(total) + 1, 0.0);
        ways[0] = 1.0;
        long long reach = 0;
        for (int i = 0; i < n; ++i) {
            int s = scaled[static_cast<size_t>(i)];
            reach += s;
            for (long long w = reach; w >= s; --w) ways[static_cast<size_t>(w)] += ways[static_cast<size_t>(w - s)];
        }
        double denom = std::ldexp(1.0, n);  // 2^n
        long long w2 = static_cast<long long>(std::llround(2.0 * w_plus));
        double cdf = 0.0, sf = 0.0;
        for (long long w = 0; w <= total; ++w) {
            if (w <= w2) cdf += ways[static_cast<size_t>(w)];
            if (w >= w2) sf += ways[static_cast<size_t>(w)];
        }
        double p = 2.0 * std::min(cdf, sf) / denom;
        r.p_value = std::min(1.0, p);
        r.exact = true;
    } else {
        double mu = n * (n + 1) / 4.0;
        double var = n * (n + 1) * (2.0 * n + 1) / 24.0;
        for (int t : tie_sizes)
            var -= (static_cast<double>(t) * t * t - t) / 48.0;
        double sd = std::sqrt(var);
        double z = (w_plus - mu) / sd;
        r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
        r.exact = false;
    }
    (void)w_minus;
    return r;
}

}  // namespace imitate::stats
