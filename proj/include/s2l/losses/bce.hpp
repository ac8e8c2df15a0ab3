#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace s2l::losses {

class LossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a scale has too few confident cells to form a pair.
class DegeneratePairSet : public LossError {
public:
    using LossError::LossError;
};

// Probabilities are clamped to [eps, 1 - eps] before the log.
inline constexpr double kProbEpsilon = 1e-7;

inline double clamp_probability(double t) noexcept { return std::clamp(t, kProbEpsilon, 1.0 - kProbEpsilon); }

inline double bce(double target, double prob) noexcept {
    const double p = clamp_probability(prob);
    return -(target * std::log(p) + (1.0 - target) * std::log1p(-p));
}

// d bce / d prob; zero where the clamp is active.
inline double bce_grad(double target, double prob) noexcept {
    if (!(prob > kProbEpsilon && prob < 1.0 - kProbEpsilon)) return 0.0;
    return -target / prob + (1.0 - target) / (1.0 - prob);
}

// Logit at which sigmoid reaches 1 - eps; clamping the logit to
// [-kLogitClamp, kLogitClamp] is the same as clamping the probability.
inline const double kLogitClamp = std::log((1.0 - kProbEpsilon) / kProbEpsilon);

// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
        else comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace s2l::losses
