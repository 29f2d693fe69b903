#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rissc/tensor.hpp"

namespace rissc::ad {

using NamedTensor = std::pair<std::string, Tensor>;

struct GradCheckOptions {
    double step = 1e-6;
    // Coordinates probed per tensor; tensors at most this large are probed exhaustively.
    std::size_t samples_per_tensor = 8;
    std::uint64_t seed = 0;
    // Probes where both |analytic| and |numeric| fall below this magnitude are
    // dominated by rounding in the loss and are reported as unresolved instead
    // of entering the maximum. Zero keeps every probe.
    double resolution = 0.0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool resolved = true;
};

struct GradCheckReport {
    double max_rel_error = 0.0;  // over resolved probes
    std::size_t unresolved = 0;
    std::vector<GradCheckEntry> entries;

    const GradCheckEntry* worst() const;
};

// Compares reverse-mode gradients of `loss_fn` against central differences.
// `loss_fn` must be deterministic and build its graph from `params`.
// Relative error is |a - n| / max(|a|, |n|, 1e-12).
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor> params,
                                  const GradCheckOptions& opts = {});

}  // namespace rissc::ad
