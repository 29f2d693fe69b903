#include "rissc/metrics.hpp"

#include <cmath>

namespace rissc::metrics {

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::span<const text::TokenId> targets) {
    if (logits.rank() != 3)
        throw ad::ShapeError("cross_entropy_loss: expected logits [B, L, V], got " + ad::shape_str(logits.shape()));
    const auto batch = logits.dim(0), len = logits.dim(1), vocab = logits.dim(2);
    if (targets.size() != batch * len)
        throw ad::ShapeError("cross_entropy_loss: " + std::to_string(targets.size()) + " targets for logits " +
                             ad::shape_str(logits.shape()));

    const auto& z = logits.data();
    const auto positions = batch * len;
    // Per position: softmax row (kept for backward) and d loss / d p_target.
    auto probs = std::make_shared<std::vector<double>>(z.size());
    auto dl_dp = std::make_shared<std::vector<double>>(positions, 0.0);
    std::vector<std::size_t> tgt(positions);
    long double loss = 0.0L;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const double* row = z.data() + pos * vocab;
        double* pr = probs->data() + pos * vocab;
        double mx = row[0];
        for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
        double zsum = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) zsum += (pr[v] = std::exp(row[v] - mx));
        for (std::size_t v = 0; v < vocab; ++v) pr[v] /= zsum;

        const auto t = targets[pos];
        if (t == text::kPad) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
            throw ad::ShapeError("cross_entropy_loss: target id " + std::to_string(t) + " outside vocabulary");
        tgt[pos] = static_cast<std::size_t>(t);
        const double q = 1.0;
        const double p_raw = pr[tgt[pos]];
        const double p = std::clamp(p_raw, kProbClamp, 1.0 - kProbClamp);
        loss -= q * std::log(p) + (1.0 - q) * std::log(1.0 - p);
        if (p == p_raw) (*dl_dp)[pos] = -(q / p - (1.0 - q) / (1.0 - p));
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    return ad::make_result({1}, {static_cast<double>(loss) * inv_b}, {logits},
                           [probs, dl_dp, tgt = std::move(tgt), positions, vocab, inv_b](ad::Node& o) {
                               auto& g = o.parents[0]->grad_buffer();
                               const double scale = o.grad[0] * inv_b;
                               for (std::size_t pos = 0; pos < positions; ++pos) {
                                   const double d = (*dl_dp)[pos];
                                   if (d == 0.0) continue;
                                   const double* pr = probs->data() + pos * vocab;
                                   const double pt = pr[tgt[pos]];
                                   double* gr = g.data() + pos * vocab;
                                   // dp_t/dz_v = p_t (1[v = t] - p_v)
                                   for (std::size_t v = 0; v < vocab; ++v) gr[v] -= scale * d * pt * pr[v];
                                   gr[tgt[pos]] += scale * d * pt;
                               }
                           });
}

NgramCounts<text::TokenId> ngram_counts(std::span<const text::TokenId> tokens, std::size_t order) {
    std::vector<text::TokenId> plain;
    for (auto t : tokens)
        if (t != text::kPad && t != text::kStart && t != text::kEnd) plain.push_back(t);
    return ngram_counts<text::TokenId>(std::span<const text::TokenId>(plain), order);
}

BleuConfig BleuConfig::individual(std::size_t order) {
    if (order == 0) throw std::invalid_argument("BLEU order must be at least 1");
    BleuConfig c;
    c.weights.assign(order, 0.0);
    c.weights.back() = 1.0;
    return c;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
    if (matches.size() < o.matches.size()) {
        matches.resize(o.matches.size(), 0);
        totals.resize(o.totals.size(), 0);
        reference_totals.resize(o.reference_totals.size(), 0);
    }
    for (std::size_t i = 0; i < o.matches.size(); ++i) {
        matches[i] += o.matches[i];
        totals[i] += o.totals[i];
        reference_totals[i] += o.reference_totals[i];
    }
    reference_length += o.reference_length;
    candidate_length += o.candidate_length;
    return *this;
}

double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg) {
    for (double w : cfg.weights)
        if (w < 0.0) throw std::invalid_argument("BLEU weights must be non-negative");
    if (stats.candidate_length == 0 || stats.reference_length == 0) return 0.0;
    double log_bleu = std::min(1.0 - static_cast<double>(stats.candidate_length) /
                                         static_cast<double>(stats.reference_length),
                               0.0);
    for (std::size_t i = 0; i < cfg.weights.size(); ++i) {
        if (cfg.weights[i] == 0.0) continue;
        double p = 0.0;
        if (stats.totals[i] != 0)
            p = static_cast<double>(stats.matches[i]) / static_cast<double>(stats.totals[i]);
        else if (stats.reference_totals[i] == 0)
            p = 1.0;
        log_bleu += cfg.weights[i] * std::log(std::max(p, cfg.floor));
    }
    return std::exp(log_bleu);
}

double sentence_bleu(std::span<const text::TokenId> reference, std::span<const text::TokenId> candidate,
                     const BleuConfig& cfg) {
    const auto r = text::strip_specials(reference);
    const auto c = text::strip_specials(candidate);
    return bleu<text::TokenId>(r, c, cfg);
}

}  // namespace rissc::metrics
