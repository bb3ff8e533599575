#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "auscult/types.hpp"

namespace auscult {

struct EmdConfig {
    int max_imfs = 10;
    int max_sift_iters = 10;
    int keep_modes = 5;
    /// Cauchy-type stop threshold on sum (h_prev - h)^2 / sum h_prev^2.
    double sd_threshold = 0.2;

    void validate() const;
};

struct EemdConfig {
    EmdConfig emd;
    int ensembles = 2;
    /// Noise standard deviation as a fraction of the signal's std.
    double noise_std_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DwtConfig {
    std::string wavelet = "db8";
    int levels = 10;
    int keep_detail_levels = 10;

    void validate() const;
};

enum class BandMethod { Raw, Emd, Eemd, Dwt, EmdDwt, EemdDwt };

/// Where a band came from. imf_index and dwt_level are 1-based; 0 = n/a.
struct BandTag {
    BandMethod method = BandMethod::Raw;
    int imf_index = 0;
    int dwt_level = 0;
    double sample_rate_hz = 0.0;  ///< effective rate of the band's samples
    double low_hz = 0.0;          ///< nominal pass band
    double high_hz = 0.0;

    /// "raw", "imf2", "d3", "imf2_d3".
    std::string name() const;
};

struct BandSet {
    std::vector<Signal> bands;
    std::vector<BandTag> tags;
    std::optional<Signal> residual;
    double source_rate_hz = 0.0;
    std::vector<std::string> notes;  ///< e.g. IMF counts, early DWT stops
};

/// One sifted IMF and how its sifting ended.
struct SiftOutcome {
    int iterations = 0;
    bool by_criterion = false;
};

/// Every IMF extracted plus the final residue; sum(imfs) + residue == input.
struct EmdResult {
    std::vector<Signal> imfs;
    Signal residue;
    std::vector<SiftOutcome> sifts;
};

/// Extrema / zero-crossing counts used by the IMF criterion.
struct ExtremaCount {
    std::size_t maxima = 0;
    std::size_t minima = 0;
    std::size_t zero_crossings = 0;
};
ExtremaCount count_extrema(std::span<const double> x);

/// Natural cubic spline through (xs, ys), evaluated at 0, 1, ..., n-1.
/// xs strictly increasing, at least two knots.
Signal natural_spline(std::span<const double> xs, std::span<const double> ys, std::size_t n);

EmdResult emd_full(std::span<const double> signal, const EmdConfig& cfg);

/// First keep_modes IMFs of emd_full (fewer if the signal has fewer).
BandSet emd(std::span<const double> signal, const EmdConfig& cfg, double rate_hz = 0.0);

/// Band l is the mean over `ensembles` noise-perturbed EMD runs of IMF l;
/// runs lacking mode l contribute zero. Member w uses seed + w.
BandSet eemd(std::span<const double> signal, const EemdConfig& cfg, double rate_hz = 0.0);

/// Detail bands 1..keep_detail_levels (level 1 = highest frequency). The
/// final approximation is discarded.
BandSet dwt(std::span<const double> signal, const DwtConfig& cfg, double rate_hz = 0.0);

enum class ChainFirst { Emd, Eemd };

/// Each kept IMF is split by DWT; emits (imf, level) bands in imf-major order.
BandSet chain_decompose(std::span<const double> signal, ChainFirst first, const EemdConfig& eemd_cfg,
                        const DwtConfig& dwt_cfg, double rate_hz = 0.0);

BandSet identity_decompose(std::span<const double> signal, double rate_hz = 0.0);

enum class Decomposition { None, Emd, Eemd, Dwt, EmdDwt, EemdDwt };

Decomposition parse_decomposition(std::string_view s);
std::string_view to_string(Decomposition d);

struct DecompositionConfig {
    EemdConfig eemd;  ///< eemd.emd also drives plain EMD
    DwtConfig dwt;    ///< standalone DWT
    DwtConfig chain_dwt{"db8", 10, 5};

    void validate() const;
};

/// Band count produced when nothing stops early.
std::size_t nominal_band_count(Decomposition d, const DecompositionConfig& cfg);

/// Tags (with names) of the nominal bands, in output order.
std::vector<std::string> nominal_band_names(Decomposition d, const DecompositionConfig& cfg);

BandSet decompose(std::span<const double> signal, double rate_hz, Decomposition d, const DecompositionConfig& cfg);

}  // namespace auscult
