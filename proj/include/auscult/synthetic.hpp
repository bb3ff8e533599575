#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace auscult {

struct SyntheticOptions {
    int sample_rate_hz = 16000;
    double min_cycle_s = 2.0;
    double max_cycle_s = 4.0;
    /// Total burst energy of a crackle cycle as a multiple of its breathing
    /// energy in 200-2000 Hz. Real crackles stand well above the breath sound.
    double burst_energy_ratio = 2.0;
};

struct SyntheticCorpus {
    std::vector<std::filesystem::path> wav_files;
    std::size_t crackle_cycles = 0;
    std::size_t quiet_cycles = 0;
};

/// Writes n_cycles/2 recordings to `out_dir`, each a `.wav` with a same-stem
/// `.txt` annotation holding two back-to-back cycles: one quiet, one with
/// crackles, in random order. Quiet cycles are pink noise limited to 50-600 Hz
/// under a two-phase breathing envelope; crackle cycles add 3-8 Hann-windowed
/// noise bursts of 5-15 ms, band-limited to 200-2000 Hz, at random offsets.
/// Files are a pure function of (n_cycles, seed, options). Throws ConfigError
/// for an odd or non-positive n_cycles.
SyntheticCorpus make_synthetic_corpus(std::size_t n_cycles, std::uint64_t seed, const std::filesystem::path& out_dir,
                                      const SyntheticOptions& opts = {});

}  // namespace auscult
