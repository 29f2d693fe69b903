#include "rissc/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rissc/ops.hpp"

namespace rissc::channel {

double wrap_phase(double angle) {
    double r = std::fmod(angle, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

void ReflectionConfig::validate() const {
    if (gamma.size() != phi.size()) throw std::invalid_argument("reflection: gamma and phi lengths differ");
    for (double g : gamma)
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("reflection: amplitude outside [0, 1]");
    for (double p : phi)
        if (!(p >= 0.0 && p < kTwoPi)) throw std::invalid_argument("reflection: phase outside [0, 2pi)");
}

cplx complex_gaussian(std::mt19937_64& rng, double variance) {
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    const double re = nd(rng);
    const double im = nd(rng);
    return {re, im};
}

ChannelRealization sample_channels(std::size_t n, std::mt19937_64& rng) {
    if (n == 0) throw std::invalid_argument("sample_channels: N must be at least 1");
    ChannelRealization ch;
    ch.h1 = complex_gaussian(rng);
    ch.h2.resize(n);
    ch.h3.resize(n);
    for (auto& h : ch.h2) h = complex_gaussian(rng);
    for (auto& h : ch.h3) h = complex_gaussian(rng);
    return ch;
}

ChannelRealization sample_channels(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_channels(n, rng);
}

ReflectionConfig align_phases(const ChannelRealization& ch) {
    const auto n = ch.elements();
    ReflectionConfig r;
    r.gamma.assign(n, 1.0 / static_cast<double>(n));
    r.phi.resize(n);
    const double t1 = phase(ch.h1);
    for (std::size_t i = 0; i < n; ++i) r.phi[i] = wrap_phase(t1 - phase(ch.h2[i]) - phase(ch.h3[i]));
    return r;
}

ReflectionConfig ris_off(std::size_t n) {
    ReflectionConfig r;
    r.gamma.assign(n, 0.0);
    r.phi.assign(n, 0.0);
    return r;
}

cplx effective_gain(const ChannelRealization& ch, const ReflectionConfig& refl) {
    if (refl.elements() != ch.elements() || refl.phi.size() != ch.elements() || ch.h3.size() != ch.h2.size())
        throw std::invalid_argument("effective_gain: element counts disagree");
    cplx delta = ch.h1;
    for (std::size_t n = 0; n < ch.elements(); ++n) delta += std::polar(refl.gamma[n], refl.phi[n]) * ch.h2[n] * ch.h3[n];
    return delta;
}

double aligned_gain_magnitude(const ChannelRealization& ch) {
    double s = 0.0;
    for (std::size_t n = 0; n < ch.elements(); ++n) s += std::abs(ch.h2[n]) * std::abs(ch.h3[n]);
    return std::abs(ch.h1) + s / static_cast<double>(ch.elements());
}

ad::Tensor apply_channel(const ad::Tensor& x, std::span<const cplx> deltas, const NoiseModel& noise,
                         std::uint64_t seed) {
    if (x.rank() != 3 || x.dim(2) != 2)
        throw ad::ShapeError("apply_channel: expected [B, M, 2], got " + ad::shape_str(x.shape()));
    const auto rows = x.dim(0);
    if (deltas.size() != rows && deltas.size() != 1)
        throw ad::ShapeError("apply_channel: " + std::to_string(deltas.size()) + " gains for " + std::to_string(rows) +
                             " rows");
    std::vector<double> coef(2 * rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto d = deltas[deltas.size() == 1 ? 0 : r];
        if (!std::isfinite(d.real()) || !std::isfinite(d.imag())) throw std::invalid_argument("apply_channel: non-finite gain");
        coef[2 * r] = d.real();
        coef[2 * r + 1] = d.imag();
    }
    auto faded = ad::complex_scale(x, ad::Tensor::from_data({rows, 2}, std::move(coef)));
    if (noise.sigma2 <= 0.0) return faded;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, std::sqrt(noise.sigma2 / 2.0));
    std::vector<double> n(x.size());
    for (auto& v : n) v = nd(rng);
    return ad::add(faded, ad::Tensor::from_data(x.shape(), std::move(n)));
}

ad::Tensor derotate(const ad::Tensor& y, std::span<const double> theta) {
    if (y.rank() < 2 || y.shape().back() != 2)
        throw ad::ShapeError("derotate: expected [B, ..., 2], got " + ad::shape_str(y.shape()));
    const auto rows = y.dim(0);
    if (theta.size() != rows && theta.size() != 1)
        throw ad::ShapeError("derotate: " + std::to_string(theta.size()) + " angles for " + std::to_string(rows) + " rows");
    std::vector<double> coef(2 * rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double t = theta[theta.size() == 1 ? 0 : r];
        coef[2 * r] = std::cos(t);
        coef[2 * r + 1] = -std::sin(t);
    }
    return ad::complex_scale(y, ad::Tensor::from_data({rows, 2}, std::move(coef)));
}

ChannelRealization perturb_csi(const ChannelRealization& ch, double epsilon, std::mt19937_64& rng) {
    if (epsilon < 0.0) throw std::invalid_argument("perturb_csi: epsilon must be non-negative");
    if (epsilon == 0.0) return ch;
    const double var = epsilon * epsilon;
    ChannelRealization est = ch;
    est.h1 *= 1.0 + complex_gaussian(rng, var);
    for (auto& h : est.h2) h *= 1.0 + complex_gaussian(rng, var);
    for (auto& h : est.h3) h *= 1.0 + complex_gaussian(rng, var);
    return est;
}

ChannelRealization perturb_csi(const ChannelRealization& ch, double epsilon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return perturb_csi(ch, epsilon, rng);
}

double snr_to_sigma(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

LinkState ris_link(const ChannelRealization& truth, const ChannelRealization& estimate) {
    return {effective_gain(truth, align_phases(estimate)), phase(estimate.h1)};
}

LinkState point_to_point_link(const ChannelRealization& truth, const ChannelRealization& estimate) {
    return {effective_gain(truth, ris_off(truth.elements())), phase(estimate.h1)};
}

PhaseBenchReport phase_bench(std::span<const ChannelRealization> channels, std::size_t random_configs,
                             std::uint64_t seed) {
    PhaseBenchReport rep;
    rep.trials = channels.size();
    rep.random_configs = random_configs;
    if (channels.empty()) return rep;
    rep.elements = channels.front().elements();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    long double aligned = 0.0L, direct = 0.0L, ratio = 0.0L;
    for (const auto& ch : channels) {
        const double a = std::abs(effective_gain(ch, align_phases(ch)));
        const double d = std::abs(ch.h1);
        aligned += a;
        direct += d;
        ratio += a / d;
        rep.max_closed_form_error = std::max(rep.max_closed_form_error, std::abs(a - aligned_gain_magnitude(ch)));
        ReflectionConfig r;
        r.gamma.assign(ch.elements(), 1.0 / static_cast<double>(ch.elements()));
        r.phi.resize(ch.elements());
        for (std::size_t k = 0; k < random_configs; ++k) {
            for (auto& p : r.phi) p = angle(rng);
            if (std::abs(effective_gain(ch, r)) > a) ++rep.beat_count;
        }
    }
    const auto n = static_cast<long double>(channels.size());
    rep.mean_aligned = static_cast<double>(aligned / n);
    rep.mean_direct = static_cast<double>(direct / n);
    rep.mean_gain_ratio = static_cast<double>(ratio / n);
    return rep;
}

PhaseBenchReport phase_bench(std::size_t n, std::size_t trials, std::size_t random_configs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ChannelRealization> chs;
    chs.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) chs.push_back(sample_channels(n, rng));
    return phase_bench(chs, random_configs, rng());
}

}  // namespace rissc::channel
