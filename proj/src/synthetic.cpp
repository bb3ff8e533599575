#include "auscult/synthetic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "auscult/error.hpp"
#include "auscult/random.hpp"
#include "auscult/wav.hpp"

namespace auscult {

namespace {

double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

// White Gaussian noise shaped in the frequency domain: zero outside [lo, hi],
// and 1/sqrt(f) amplitude (1/f power) inside when `pink`. Unit RMS.
std::vector<double> shaped_noise(std::size_t n, double rate, double lo, double hi, bool pink, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    std::vector<std::complex<double>> spec(n / 2 + 1);
    const int len = static_cast<int>(n);
    auto* out = reinterpret_cast<fftw_complex*>(spec.data());
    fftw_plan fwd = fftw_plan_dft_r2c_1d(len, x.data(), out, FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * rate / static_cast<double>(n);
        if (f < lo || f > hi) spec[k] = 0.0;
        else if (pink) spec[k] /= std::sqrt(f);
    }
    fftw_plan inv = fftw_plan_dft_c2r_1d(len, out, x.data(), FFTW_ESTIMATE);
    fftw_execute(inv);
    fftw_destroy_plan(inv);
    const double r = rms(x);
    if (r > 0.0)
        for (auto& v : x) v /= r;
    return x;
}

// Energy of x in [lo, hi] Hz, from the one-sided spectrum (Parseval).
double band_energy(std::vector<double> x, double rate, double lo, double hi) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> spec(n / 2 + 1);
    auto* out = reinterpret_cast<fftw_complex*>(spec.data());
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), out, FFTW_ESTIMATE);
    fftw_execute(p);
    fftw_destroy_plan(p);
    double e = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * rate / static_cast<double>(n);
        if (f < lo || f > hi) continue;
        const bool edge = k == 0 || 2 * k == n;
        e += (edge ? 1.0 : 2.0) * std::norm(spec[k]);
    }
    return e / static_cast<double>(n);
}

// Inhale (first 40%) then a longer, softer exhale, over a floor.
double breathing_envelope(double t, double duration) {
    const double inhale = 0.4 * duration;
    if (t < inhale) return 0.15 + 0.85 * std::pow(std::sin(std::numbers::pi * t / inhale), 2);
    return 0.15 + 0.6 * std::pow(std::sin(std::numbers::pi * (t - inhale) / (duration - inhale)), 2);
}

std::vector<double> make_cycle(bool crackle, std::size_t n, const SyntheticOptions& opts, std::mt19937_64& rng) {
    const double rate = opts.sample_rate_hz;
    auto x = shaped_noise(n, rate, 50.0, 600.0, true, rng);
    const double duration = static_cast<double>(n) / rate;
    for (std::size_t i = 0; i < n; ++i) x[i] *= 0.1 * breathing_envelope(static_cast<double>(i) / rate, duration);
    if (!crackle) return x;

    std::uniform_int_distribution<int> count(3, 8), width_ms(5, 15);
    const int bursts = count(rng);
    std::vector<double> added(n, 0.0);
    for (int b = 0; b < bursts; ++b) {
        const auto len = static_cast<std::size_t>(width_ms(rng) * opts.sample_rate_hz / 1000);
        const auto offset = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
        auto burst = shaped_noise(len, rate, 200.0, 2000.0, false, rng);
        for (std::size_t i = 0; i < len; ++i) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1));
            added[offset + i] += w * burst[i];
        }
    }
    double burst_energy = 0.0;
    for (double v : added) burst_energy += v * v;
    const double scale = std::sqrt(opts.burst_energy_ratio * band_energy(x, rate, 200.0, 2000.0) / burst_energy);
    for (std::size_t i = 0; i < n; ++i) x[i] += scale * added[i];
    return x;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(std::size_t n_cycles, std::uint64_t seed, const std::filesystem::path& out_dir,
                                      const SyntheticOptions& opts) {
    if (n_cycles == 0 || n_cycles % 2 != 0) {
        throw ConfigError("synthetic corpus needs a positive even cycle count (got " + std::to_string(n_cycles) + ")");
    }
    if (opts.sample_rate_hz < 4000 || opts.min_cycle_s < 0.1 || opts.max_cycle_s < opts.min_cycle_s) {
        throw ConfigError("synthetic corpus: sample rate must be >= 4000 Hz and 0.1 <= min_cycle_s <= max_cycle_s");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());

    SyntheticCorpus corpus;
    const std::size_t recordings = n_cycles / 2;
    const int ms_lo = static_cast<int>(std::lround(opts.min_cycle_s * 1000));
    const int ms_hi = static_cast<int>(std::lround(opts.max_cycle_s * 1000));
    for (std::size_t r = 0; r < recordings; ++r) {
        std::mt19937_64 rng(derive_seed(seed, {r}));
        const bool crackle_first = std::bernoulli_distribution(0.5)(rng);
        std::vector<double> audio;
        std::string annotation;
        int start_ms = 0;
        for (int c = 0; c < 2; ++c) {
            const bool crackle = (c == 0) == crackle_first;
            // Whole milliseconds, so annotation times land exactly on samples.
            const int ms = std::uniform_int_distribution<int>(ms_lo, ms_hi)(rng);
            const auto n = static_cast<std::size_t>(ms) * static_cast<std::size_t>(opts.sample_rate_hz) / 1000;
            const auto cycle = make_cycle(crackle, n, opts, rng);
            audio.insert(audio.end(), cycle.begin(), cycle.end());
            char line[96];
            std::snprintf(line, sizeof line, "%d.%03d\t%d.%03d\t%d\t0\n", start_ms / 1000, start_ms % 1000,
                          (start_ms + ms) / 1000, (start_ms + ms) % 1000, crackle ? 1 : 0);
            annotation += line;
            start_ms += ms;
            (crackle ? corpus.crackle_cycles : corpus.quiet_cycles)++;
        }
        double peak = 0.0;
        for (double v : audio) peak = std::max(peak, std::abs(v));
        if (peak > 0.9)
            for (auto& v : audio) v *= 0.9 / peak;

        char stem[64];
        std::snprintf(stem, sizeof stem, "%zu_%zus1_Tc_sc_Synth", 200 + r / 2, r % 2 + 1);
        const auto wav = out_dir / (std::string(stem) + ".wav");
        write_wav16(wav, audio, opts.sample_rate_hz);
        std::ofstream txt(out_dir / (std::string(stem) + ".txt"), std::ios::binary);
        if (!(txt << annotation)) throw ConfigError("cannot write annotations to " + out_dir.string());
        corpus.wav_files.push_back(wav);
    }
    return corpus;
}

}  // namespace auscult
