#include "rissc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rissc::ad {

const GradCheckEntry* GradCheckReport::worst() const {
    if (entries.empty()) return nullptr;
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries)
        if (e.resolved && (!w || e.rel_error > w->rel_error)) w = &e;
    return w;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor> params,
                                  const GradCheckOptions& opts) {
    for (auto& [name, t] : params) t.zero_grad();
    backward(loss_fn());

    std::mt19937_64 rng(opts.seed);
    GradCheckReport report;
    for (auto& [name, t] : params) {
        std::vector<std::size_t> coords(t.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > opts.samples_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.samples_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                          : std::vector<double>(t.size(), 0.0);
        auto values = t.mutable_data();
        for (auto idx : coords) {
            const double orig = values[idx];
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard guard;
                values[idx] = orig + opts.step;
                plus = loss_fn().item();
                values[idx] = orig - opts.step;
                minus = loss_fn().item();
                values[idx] = orig;
            }
            GradCheckEntry e;
            e.name = name;
            e.index = idx;
            e.analytic = analytic[idx];
            e.numeric = (plus - minus) / (2.0 * opts.step);
            e.rel_error = std::abs(e.analytic - e.numeric) /
                          std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-12});
            e.resolved = std::max(std::abs(e.analytic), std::abs(e.numeric)) >= opts.resolution;
            if (e.resolved)
                report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            else
                ++report.unresolved;
            report.entries.push_back(std::move(e));
        }
    }
    return report;
}

}  // namespace rissc::ad
