#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "auscult/types.hpp"

namespace auscult::wavelet {

/// Daubechies-8 reconstruction low-pass filter (16 taps), orthonormal:
/// sum = sqrt(2), sum of squares = 1.
const std::array<double, 16>& db8_lowpass();

/// Quadrature-mirror high-pass partner: g[k] = (-1)^k h[L-1-k].
std::array<double, 16> db8_highpass();

/// Only "db8" is supported; anything else throws ConfigError.
void require_supported(std::string_view wavelet);

struct LevelSplit {
    Signal approx;
    Signal detail;
};

/// One analysis step of the periodized transform. An odd-length input is
/// extended by one zero, so both outputs have ceil(n/2) samples and the step
/// stays orthogonal.
LevelSplit analyze(std::span<const double> x);

/// Inverse of analyze; returns `out_len` samples (n or n+1 before trimming).
Signal synthesize(std::span<const double> approx, std::span<const double> detail, std::size_t out_len);

/// Multi-level decomposition. details[0] is level 1 (highest frequency).
/// Stops early when the running approximation is shorter than the filter.
struct Decomposition {
    std::vector<Signal> details;
    Signal approx;
    std::vector<std::size_t> input_lengths;  ///< length entering each level
};

Decomposition decompose(std::span<const double> x, int levels);
Signal reconstruct(const Decomposition& d);

}  // namespace auscult::wavelet
