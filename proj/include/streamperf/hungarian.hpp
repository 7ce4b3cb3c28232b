#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "streamperf/common.hpp"

namespace streamperf {

// Minimum-cost assignment (Jonker-Volgenant style shortest augmenting paths
// with potentials, O(n^3)). Rectangular inputs are padded with zero-cost
// dummies, so exactly min(rows, cols) real pairs are assigned and the extra
// rows/cols stay unassigned. Returns row -> col, -1 for unassigned.
inline std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost) {
    const int rows = static_cast<int>(cost.size());
    const int cols = rows > 0 ? static_cast<int>(cost[0].size()) : 0;
    if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
    for (const auto& r : cost) {
        if (static_cast<int>(r.size()) != cols) throw ValidationError("hungarian_match: ragged cost matrix");
        for (double c : r)
            if (!std::isfinite(c)) throw ValidationError("hungarian_match: costs must be finite");
    }
    const int n = std::max(rows, cols);
    const double inf = std::numeric_limits<double>::infinity();
    auto at = [&](int i, int j) -> double { return (i < rows && j < cols) ? cost[i][j] : 0.0; };

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(rows, -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[j];
        if (i >= 1 && i <= rows && j <= cols) match[i - 1] = j - 1;
    }
    return match;
}

}  // namespace streamperf
