#include "auscult/wavelet.hpp"

#include <string>

#include "auscult/error.hpp"

namespace auscult::wavelet {

namespace {

constexpr std::size_t kTaps = 16;

// PyWavelets db8 rec_lo.
constexpr std::array<double, kTaps> kDb8 = {
    0.05441584224310401,   0.31287159091429995,   0.6756307362972898,    0.5853546836542067,
    -0.015829105256349306, -0.2840155429615469,   0.0004724845739132828, 0.12874742662047847,
    -0.017369301001807547, -0.044088253930794755, 0.013981027917398282,  0.008746094047405777,
    -0.004870352993451574, -0.00039174037337694705, 0.0006754494064505693, -0.00011747678412476953,
};

}  // namespace

const std::array<double, 16>& db8_lowpass() { return kDb8; }

std::array<double, 16> db8_highpass() {
    std::array<double, kTaps> g{};
    for (std::size_t k = 0; k < kTaps; ++k) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        g[k] = sign * kDb8[kTaps - 1 - k];
    }
    return g;
}

void require_supported(std::string_view wavelet) {
    if (wavelet != "db8") throw ConfigError("unsupported wavelet '" + std::string(wavelet) + "' (only db8)");
}

LevelSplit analyze(std::span<const double> x) {
    const std::size_t n = x.size() + (x.size() % 2);
    const std::size_t half = n / 2;
    const auto g = db8_highpass();
    LevelSplit out{Signal(half, 0.0), Signal(half, 0.0)};
    auto at = [&](std::size_t i) { return i < x.size() ? x[i] : 0.0; };
    for (std::size_t k = 0; k < half; ++k) {
        double a = 0.0;
        double d = 0.0;
        for (std::size_t j = 0; j < kTaps; ++j) {
            const double v = at((2 * k + j) % n);
            a += kDb8[j] * v;
            d += g[j] * v;
        }
        out.approx[k] = a;
        out.detail[k] = d;
    }
    return out;
}

Signal synthesize(std::span<const double> approx, std::span<const double> detail, std::size_t out_len) {
    if (approx.size() != detail.size()) throw DataError("wavelet synthesis: band length mismatch");
    const std::size_t n = 2 * approx.size();
    if (out_len > n || out_len + 1 < n) throw DataError("wavelet synthesis: inconsistent output length");
    const auto g = db8_highpass();
    Signal y(n, 0.0);
    for (std::size_t k = 0; k < approx.size(); ++k) {
        for (std::size_t j = 0; j < kTaps; ++j) {
            y[(2 * k + j) % n] += kDb8[j] * approx[k] + g[j] * detail[k];
        }
    }
    y.resize(out_len);
    return y;
}

Decomposition decompose(std::span<const double> x, int levels) {
    Decomposition d;
    Signal current(x.begin(), x.end());
    for (int level = 0; level < levels && current.size() >= kTaps; ++level) {
        d.input_lengths.push_back(current.size());
        auto split = analyze(current);
        d.details.push_back(std::move(split.detail));
        current = std::move(split.approx);
    }
    d.approx = std::move(current);
    return d;
}

Signal reconstruct(const Decomposition& d) {
    Signal current = d.approx;
    for (std::size_t level = d.details.size(); level-- > 0;) {
        current = synthesize(current, d.details[level], d.input_lengths[level]);
    }
    return current;
}

}  // namespace auscult::wavelet
