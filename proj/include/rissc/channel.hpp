#pragma once

// Physical layer: Rayleigh links, RIS reflection, received signal, phase
// alignment, receiver derotation and channel-estimation error.

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rissc/tensor.hpp"

namespace rissc::channel {

using cplx = std::complex<double>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Maps any finite angle into [0, 2pi).
double wrap_phase(double angle);

inline double amplitude(cplx h) { return std::abs(h); }
inline double phase(cplx h) { return wrap_phase(std::arg(h)); }

// One block-fading draw: direct link, transmitter->RIS and RIS->receiver.
struct ChannelRealization {
    cplx h1;
    std::vector<cplx> h2;
    std::vector<cplx> h3;

    std::size_t elements() const { return h2.size(); }
};

struct ReflectionConfig {
    std::vector<double> gamma;  // each in [0, 1]
    std::vector<double> phi;    // each in [0, 2pi)

    std::size_t elements() const { return gamma.size(); }
    // Throws std::invalid_argument on size or range violations.
    void validate() const;
};

struct NoiseModel {
    double sigma2 = 0.0;  // complex variance per symbol
};

struct CsiErrorModel {
    double epsilon = 0.0;
};

// Circularly symmetric CN(0, variance) draw.
cplx complex_gaussian(std::mt19937_64& rng, double variance = 1.0);

ChannelRealization sample_channels(std::size_t n, std::mt19937_64& rng);
ChannelRealization sample_channels(std::size_t n, std::uint64_t seed);

// phi_n = theta1 - theta2n - theta3n (mod 2pi), gamma_n = 1/N.
ReflectionConfig align_phases(const ChannelRealization& ch);

// All-zero amplitudes: the direct path alone.
ReflectionConfig ris_off(std::size_t n);

// h1 + sum_n gamma_n e^{j phi_n} h2n h3n
cplx effective_gain(const ChannelRealization& ch, const ReflectionConfig& refl);

// |h1| + (1/N) sum_n |h2n||h3n|, the magnitude reached by alignment.
double aligned_gain_magnitude(const ChannelRealization& ch);

// y = delta_b * x_b + n for each batch row b of x[B, M, 2]. `deltas` holds one
// coefficient per row (block fading) or a single shared one. Noise is drawn
// with variance sigma2/2 per real component and enters as a constant.
ad::Tensor apply_channel(const ad::Tensor& x, std::span<const cplx> deltas, const NoiseModel& noise,
                         std::uint64_t seed);

// Multiplies row b of y[B, M, 2] by e^{-j theta_b}; a single angle applies to all rows.
ad::Tensor derotate(const ad::Tensor& y, std::span<const double> theta);

// h_hat = h (1 + e), e ~ CN(0, eps^2), independently for h1 and every entry of h2, h3.
ChannelRealization perturb_csi(const ChannelRealization& ch, double epsilon, std::mt19937_64& rng);
ChannelRealization perturb_csi(const ChannelRealization& ch, double epsilon, std::uint64_t seed);

// Transmit-referenced: sigma^2 = 10^(-snr_db/10) for unit-power symbols.
double snr_to_sigma(double snr_db);

// What the receiver sees for one sentence: the true effective gain and the
// derotation angle it applies. Phases for the RIS and the derotation come
// from the estimate; propagation uses the truth.
struct LinkState {
    cplx delta;
    double derotation = 0.0;
};

LinkState ris_link(const ChannelRealization& truth, const ChannelRealization& estimate);
LinkState point_to_point_link(const ChannelRealization& truth, const ChannelRealization& estimate);

// Alignment against random search. Random configurations keep gamma_n = 1/N
// and draw every phase uniformly from [0, 2pi).
struct PhaseBenchReport {
    std::size_t elements = 0;
    std::size_t trials = 0;
    std::size_t random_configs = 0;  // per trial
    double mean_aligned = 0.0;       // mean |delta| under alignment
    double mean_direct = 0.0;        // mean |h1|
    double mean_gain_ratio = 0.0;    // mean |delta| / |h1|
    double max_closed_form_error = 0.0;  // max | |delta| - aligned_gain_magnitude |
    std::size_t beat_count = 0;      // random configurations with larger |delta|
};

PhaseBenchReport phase_bench(std::span<const ChannelRealization> channels, std::size_t random_configs,
                             std::uint64_t seed);
// Draws `trials` realizations of n elements first, then the random phases.
PhaseBenchReport phase_bench(std::size_t n, std::size_t trials, std::size_t random_configs, std::uint64_t seed);

}  // namespace rissc::channel
