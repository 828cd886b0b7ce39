#pragma once

// Brute-force references for the ranking metrics. Deliberately quadratic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "malfuse/nn/tensor.hpp"

namespace mf::testing {

inline double pairwise_auc(const std::vector<double>& s, const std::vector<double>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1.0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0.0) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Sweeps every negative score and its successor; the answer is the smallest
// candidate whose admitted fraction is strictly below the target.
inline double sweep_threshold(const std::vector<double>& neg, double target) {
    std::vector<double> cand;
    for (double v : neg) {
        cand.push_back(v);
        cand.push_back(std::nextafter(v, std::numeric_limits<double>::infinity()));
    }
    std::sort(cand.begin(), cand.end());
    for (double t : cand) {
        std::size_t admitted = 0;
        for (double v : neg) admitted += v >= t;
        if (static_cast<double>(admitted) / static_cast<double>(neg.size()) < target) return t;
    }
    return std::numeric_limits<double>::infinity();
}

inline double sweep_detection_rate(const std::vector<double>& s, const std::vector<double>& y, double target) {
    std::vector<double> neg;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (y[i] == 0.0) neg.push_back(s[i]);
    const double t = sweep_threshold(neg, target);
    std::size_t pos = 0, hit = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1.0) continue;
        ++pos;
        hit += s[i] >= t;
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(pos);
}

// Random instance with both classes; coarse levels force ties.
struct MetricInstance {
    std::vector<double> scores, labels;
    double target = 0.1;
};

inline MetricInstance random_instance(nn::Rng& rng, std::size_t max_n) {
    MetricInstance m;
    const std::size_t n = 2 + rng.below(max_n - 1);
    const bool coarse = rng.bernoulli(0.5);
    const std::uint64_t levels = 2 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
        m.scores.push_back(coarse ? static_cast<double>(rng.below(levels)) / static_cast<double>(levels) : rng.uniform());
        m.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    }
    m.labels[0] = 1.0;
    m.labels[1] = 0.0;
    m.target = rng.bernoulli(0.3) ? std::pow(10.0, -rng.uniform(0.0, 3.0)) : rng.uniform(1e-3, 0.999);
    return m;
}

}  // namespace mf::testing
