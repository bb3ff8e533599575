#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "auscult/decompose.hpp"
#include "auscult/feature_matrix.hpp"
#include "auscult/ingest.hpp"

namespace auscult {

struct StftConfig {
    int frame_len = 256;
    int hop = 128;
    std::string window = "hann";

    void validate() const;
};

struct SpectralConfig {
    double bandwidth_order = 2.0;
    double rolloff_percent = 0.85;
    int contrast_bands = 6;
    double contrast_quantile = 0.02;

    void validate() const;
};

struct MfccConfig {
    int n_mels = 40;
    int n_mfcc = 20;
    double fmin_hz = 0.0;
    double fmax_hz = 0.0;  ///< 0 means rate / 2

    void validate(double rate_hz) const;
};

struct FeatureConfig {
    StftConfig stft;
    SpectralConfig spectral;
    MfccConfig mfcc;

    void validate() const;
};

struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<std::string> flags;  ///< degenerate-input conventions that fired

    void append(const FeatureVector& other, std::string_view prefix = {});
};

/// Per-frame values; frames[t][c] belongs to columns[c].
struct FrameMatrix {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> frames;
    std::vector<std::string> flags;
};

/// mean, std (population), min, max.
FeatureVector simple_stats(std::span<const double> band);

/// skewness (m3/s^3), kurtosis (m4/s^4, non-excess), shannon_entropy
/// (-sum d^2 ln d^2, 0 ln 0 = 0), energy ((1/N) sum d^2). Zero variance gives
/// skewness = kurtosis = 0 and a flag.
FeatureVector hos_features(std::span<const double> band);

/// One-sided magnitude spectrum of each Hann-windowed frame (frame_len/2+1
/// bins). Bands shorter than a frame yield one zero-padded frame.
std::vector<std::vector<double>> stft_magnitude(std::span<const double> band, const StftConfig& stft);

/// Columns: centroid, bandwidth, contrast1..contrast{bands+1}, rolloff, zcr.
/// Contrast sub-bands are octaves below the band's Nyquist frequency.
FrameMatrix spectral_features(std::span<const double> band, const StftConfig& stft, const SpectralConfig& spec,
                              double rate_hz);

/// Spectral columns of one magnitude spectrum (bins 0..nyquist): centroid,
/// bandwidth, contrast1..contrast{bands+1}, rolloff. Sets *silent on an
/// all-zero spectrum.
std::vector<double> spectrum_features(std::span<const double> magnitude, double bin_hz, const SpectralConfig& spec,
                                      bool* silent = nullptr);

/// 2595 log10(1 + f/700). Throws ConfigError for negative f.
double mel_scale(double hz);
double mel_to_hz(double mel);

/// Triangular filters equally spaced in Mel, unit area; n_mels rows by
/// frame_len/2+1 columns.
std::vector<std::vector<double>> mel_filterbank(int n_mels, int frame_len, double rate_hz, double fmin_hz,
                                                double fmax_hz);

/// Orthonormal DCT-II basis, n_out rows by n_in columns.
std::vector<std::vector<double>> dct_matrix(int n_out, int n_in);

/// Columns mfcc01..mfccNN.
FrameMatrix mfcc(std::span<const double> band, const StftConfig& stft, const MfccConfig& cfg, double rate_hz);

/// mean, std, skewness, max, median, min of each column, named
/// `<column>_<stat>`. Throws DataError with zero frames.
FeatureVector aggregate_frames(const FrameMatrix& frames);

enum class FeatureSet { Simple, HosSpectral, Full };

FeatureSet parse_feature_set(std::string_view s);
std::string_view to_string(FeatureSet f);

/// Whether `set` includes MFCCs for decomposition `d` (chained EMD/EEMD->DWT
/// never does).
bool uses_mfcc(Decomposition d, FeatureSet set);

/// Features of one band, unprefixed.
FeatureVector band_features(std::span<const double> band, double rate_hz, FeatureSet set, bool with_mfcc,
                            const FeatureConfig& cfg);

/// Column names for (decomposition, feature set); independent of data.
std::vector<std::string> feature_names(Decomposition d, const DecompositionConfig& dcfg, FeatureSet set,
                                       const FeatureConfig& fcfg);

struct FeatureBuild {
    FeatureMatrix matrix;
    std::vector<std::pair<std::string, std::string>> dropped;  ///< (cycle id, reason)
};

struct FeatureBuildOptions {
    Decomposition decomposition = Decomposition::None;
    DecompositionConfig decomposition_cfg;
    FeatureSet feature_set = FeatureSet::Full;
    FeatureConfig feature_cfg;
    std::uint64_t seed = 0;  ///< EEMD noise; per-cycle seeds derive from it and the cycle id
    int workers = 1;
};

/// Decomposes and extracts every cycle. Cycles whose decomposition or
/// extraction fails, or that yield fewer bands than nominal, are dropped and
/// listed in `dropped`.
FeatureBuild build_feature_matrix(const std::vector<CycleRecord>& cycles, const FeatureBuildOptions& opts);

/// Bands of one cycle as the feature builder sees them.
BandSet decompose_cycle(const CycleRecord& cycle, const FeatureBuildOptions& opts);

}  // namespace auscult
