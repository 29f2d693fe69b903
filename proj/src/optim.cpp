#include "rissc/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rissc::optim {

double grad_norm(const std::vector<ad::NamedTensor>& params) {
    double s = 0.0;
    for (const auto& [_, t] : params)
        for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
}

Optimizer::Optimizer(std::vector<ad::NamedTensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
    if (cfg_.kind != "sgd" && cfg_.kind != "adam") throw std::invalid_argument("unknown optimizer '" + cfg_.kind + "'");
    if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    for (const auto& [_, t] : params_) {
        m_.emplace_back(t.size(), 0.0);
        if (cfg_.kind == "adam") v_.emplace_back(t.size(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

double Optimizer::step() {
    const double norm = grad_norm(params_);
    const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_[i].second;
        if (!t.has_grad()) continue;
        auto w = t.mutable_data();
        auto g = t.grad();
        auto& m = m_[i];
        if (cfg_.kind == "sgd") {
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = cfg_.momentum * m[k] + clip * g[k];
                w[k] -= cfg_.learning_rate * m[k];
            }
        } else {
            auto& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = clip * g[k];
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
                w[k] -= cfg_.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.adam_eps);
            }
        }
    }
    return norm;
}

}  // namespace rissc::optim
