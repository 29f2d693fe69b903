#pragma once

#include <string>
#include <vector>

#include "rissc/gradcheck.hpp"

namespace rissc::optim {

struct OptimizerConfig {
    std::string kind = "sgd";  // "sgd" or "adam"
    double learning_rate = 0.1;
    double momentum = 0.0;     // sgd only
    double clip_norm = 1.0;    // global gradient-norm clip; <= 0 disables
    double beta1 = 0.9;        // adam only
    double beta2 = 0.98;
    double adam_eps = 1e-9;
};

// Global L2 norm over every gradient buffer.
double grad_norm(const std::vector<ad::NamedTensor>& params);

class Optimizer {
public:
    Optimizer(std::vector<ad::NamedTensor> params, OptimizerConfig cfg);

    void zero_grad();
    // Clips, then updates every parameter in place. Returns the pre-clip norm.
    double step();

private:
    std::vector<ad::NamedTensor> params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

}  // namespace rissc::optim
