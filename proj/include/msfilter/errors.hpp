#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msfilter {

// Integration produced a nonfinite or absurdly large state.
class BlowUpError : public std::runtime_error {
public:
    BlowUpError(std::string where, double norm)
        : std::runtime_error("integration blow-up in " + where +
                             " (state norm " + std::to_string(norm) + ")"),
          where_(std::move(where)),
          state_norm_(norm) {}

    const std::string& where() const { return where_; }
    double state_norm() const { return state_norm_; }

private:
    std::string where_;
    double state_norm_;
};

// All particle weights vanished or a weight went nonfinite.
class DegenerateWeightsError : public std::runtime_error {
public:
    DegenerateWeightsError(std::size_t step, double weight_sum,
                           double max_weight)
        : std::runtime_error("degenerate particle weights at step " +
                             std::to_string(step) + " (sum " +
                             std::to_string(weight_sum) + ", max " +
                             std::to_string(max_weight) + ")"),
          step_(step),
          weight_sum_(weight_sum),
          max_weight_(max_weight) {}

    std::size_t step() const { return step_; }
    double weight_sum() const { return weight_sum_; }
    double max_weight() const { return max_weight_; }

private:
    std::size_t step_;
    double weight_sum_;
    double max_weight_;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg)
        : std::runtime_error("config error: " + msg) {}
};

}  // namespace msfilter
