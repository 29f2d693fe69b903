#pragma once

// Training objective and BLEU.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "rissc/tensor.hpp"
#include "rissc/text.hpp"

namespace rissc::metrics {

inline constexpr double kProbClamp = 1e-12;

// Per-word binary cross-entropy at each target token,
//   -sum_l [ q log p + (1 - q) log(1 - p) ],  q = 1,
// with p the softmax probability of the target, clamped to [1e-12, 1 - 1e-12].
// Summed over non-PAD targets and averaged over the leading (batch) axis.
// logits: [B, L, V]; targets: B*L ids.
ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::span<const text::TokenId> targets);

template <typename T>
using NgramCounts = std::map<std::vector<T>, std::size_t>;

template <typename T>
NgramCounts<T> ngram_counts(std::span<const T> tokens, std::size_t order) {
    if (order == 0) throw std::invalid_argument("ngram order must be at least 1");
    NgramCounts<T> counts;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) ++counts[std::vector<T>(tokens.begin() + i, tokens.begin() + i + order)];
    return counts;
}

// Specials are removed before counting.
NgramCounts<text::TokenId> ngram_counts(std::span<const text::TokenId> tokens, std::size_t order);

struct BleuConfig {
    std::vector<double> weights;  // weights[i-1] applies to i-grams
    double floor = 1e-12;

    static BleuConfig individual(std::size_t order);  // weight 1 on one order only
};

// Sufficient statistics; corpus scores add these over sentence pairs.
struct BleuStats {
    std::vector<std::size_t> matches;  // clipped, per order
    std::vector<std::size_t> totals;   // candidate i-grams, per order
    std::vector<std::size_t> reference_totals;
    std::size_t reference_length = 0;
    std::size_t candidate_length = 0;

    BleuStats& operator+=(const BleuStats& o);
};

template <typename T>
BleuStats bleu_stats(std::span<const T> reference, std::span<const T> candidate, std::size_t max_order) {
    BleuStats s;
    s.matches.assign(max_order, 0);
    s.totals.assign(max_order, 0);
    s.reference_totals.assign(max_order, 0);
    s.reference_length = reference.size();
    s.candidate_length = candidate.size();
    for (std::size_t i = 1; i <= max_order; ++i) {
        const auto rc = ngram_counts<T>(reference, i);
        for (const auto& [g, c] : rc) s.reference_totals[i - 1] += c;
        for (const auto& [g, c] : ngram_counts<T>(candidate, i)) {
            s.totals[i - 1] += c;
            if (auto it = rc.find(g); it != rc.end()) s.matches[i - 1] += std::min(c, it->second);
        }
    }
    return s;
}

// log BLEU = min(1 - l_cand / l_ref, 0) + sum_i w_i log p_i
// p_i is clipped matches over candidate i-grams, floored before the log. When
// neither side has any i-gram (both shorter than i) p_i is taken as 1.
double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg);

template <typename T>
double bleu(std::span<const T> reference, std::span<const T> candidate, const BleuConfig& cfg) {
    return bleu_from_stats(bleu_stats<T>(reference, candidate, cfg.weights.size()), cfg);
}

// Reference/candidate id sequences (specials are stripped first).
double sentence_bleu(std::span<const text::TokenId> reference, std::span<const text::TokenId> candidate,
                     const BleuConfig& cfg);

template <typename T>
double corpus_bleu(std::span<const std::vector<T>> references, std::span<const std::vector<T>> candidates,
                   const BleuConfig& cfg) {
    if (references.size() != candidates.size()) throw std::invalid_argument("corpus_bleu: pair count mismatch");
    BleuStats total;
    total.matches.assign(cfg.weights.size(), 0);
    total.totals.assign(cfg.weights.size(), 0);
    total.reference_totals.assign(cfg.weights.size(), 0);
    for (std::size_t i = 0; i < references.size(); ++i)
        total += bleu_stats<T>(references[i], candidates[i], cfg.weights.size());
    return bleu_from_stats(total, cfg);
}

}  // namespace rissc::metrics
