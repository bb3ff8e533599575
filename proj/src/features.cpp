#include "auscult/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "auscult/error.hpp"
#include "auscult/parallel.hpp"
#include "auscult/random.hpp"

namespace auscult {

namespace {

// FFTW planning is not thread-safe; execution with new arrays is. Plans are
// made once per size with FFTW_UNALIGNED so any buffer can be used.
class RealFft {
public:
    explicit RealFft(int n) : n_(n) {
        static std::mutex mutex;
        static std::map<int, fftw_plan> plans;
        std::lock_guard lock(mutex);
        auto it = plans.find(n);
        if (it == plans.end()) {
            std::vector<double> in(static_cast<std::size_t>(n));
            std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
            fftw_plan p = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
            it = plans.emplace(n, p).first;
        }
        plan_ = it->second;
    }

    /// |X[k]| for k = 0..n/2.
    std::vector<double> magnitude(std::vector<double>& frame) const {
        std::vector<fftw_complex> out(static_cast<std::size_t>(n_ / 2 + 1));
        fftw_execute_dft_r2c(plan_, frame.data(), out.data());
        std::vector<double> mag(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
        return mag;
    }

private:
    int n_;
    fftw_plan plan_;
};

struct Moments {
    double mean = 0.0;
    double std = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
};

Moments moments(std::span<const double> x) {
    Moments m;
    const auto n = static_cast<double>(x.size());
    m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0.0;
    for (double v : x) {
        const double d = v - m.mean;
        const double d2 = d * d;
        m2 += d2;
        m.m3 += d2 * d;
        m.m4 += d2 * d2;
    }
    m2 /= n;
    m.m3 /= n;
    m.m4 /= n;
    m.std = std::sqrt(m2);
    return m;
}

std::vector<std::vector<double>> frame_signal(std::span<const double> band, const StftConfig& stft) {
    const auto len = static_cast<std::size_t>(stft.frame_len);
    const auto hop = static_cast<std::size_t>(stft.hop);
    std::vector<std::vector<double>> frames;
    if (band.size() < len) {
        std::vector<double> f(len, 0.0);
        std::copy(band.begin(), band.end(), f.begin());
        frames.push_back(std::move(f));
        return frames;
    }
    for (std::size_t start = 0; start + len <= band.size(); start += hop) {
        frames.emplace_back(band.begin() + static_cast<std::ptrdiff_t>(start),
                            band.begin() + static_cast<std::ptrdiff_t>(start + len));
    }
    return frames;
}

std::vector<double> hann(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    return w;
}

double zero_crossing_rate(std::span<const double> frame) {
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < frame.size(); ++i) {
        if ((frame[i] >= 0.0) != (frame[i - 1] >= 0.0)) ++crossings;
    }
    return static_cast<double>(crossings) / static_cast<double>(frame.size());
}

double db(double power) { return 10.0 * std::log10(std::max(power, 1e-10)); }

const char* const kStatNames[] = {"mean", "std", "skewness", "max", "median", "min"};

std::vector<std::string> spectral_columns(const SpectralConfig& spec) {
    std::vector<std::string> cols{"centroid", "bandwidth"};
    for (int b = 1; b <= spec.contrast_bands + 1; ++b) cols.push_back("contrast" + std::to_string(b));
    cols.push_back("rolloff");
    cols.push_back("zcr");
    return cols;
}

std::vector<std::string> mfcc_columns(const MfccConfig& cfg) {
    std::vector<std::string> cols;
    for (int c = 1; c <= cfg.n_mfcc; ++c) {
        cols.push_back(std::string("mfcc") + (c < 10 ? "0" : "") + std::to_string(c));
    }
    return cols;
}

std::vector<std::string> aggregated_names(const std::vector<std::string>& cols) {
    std::vector<std::string> out;
    for (const auto& c : cols) {
        for (const char* s : kStatNames) out.push_back(c + "_" + s);
    }
    return out;
}

std::vector<std::string> band_feature_names(FeatureSet set, bool with_mfcc, const FeatureConfig& cfg) {
    std::vector<std::string> names{"mean", "std", "min", "max"};
    if (set == FeatureSet::Simple) return names;
    for (const char* n : {"skewness", "kurtosis", "shannon_entropy", "energy"}) names.emplace_back(n);
    for (auto& n : aggregated_names(spectral_columns(cfg.spectral))) names.push_back(std::move(n));
    if (set == FeatureSet::Full && with_mfcc) {
        for (auto& n : aggregated_names(mfcc_columns(cfg.mfcc))) names.push_back(std::move(n));
    }
    return names;
}

}  // namespace

void StftConfig::validate() const {
    if (frame_len <= 0 || (frame_len & (frame_len - 1)) != 0) throw ConfigError("STFT frame_len must be a power of two");
    if (hop <= 0 || hop > frame_len) throw ConfigError("STFT hop must be in (0, frame_len]");
    if (window != "hann") throw ConfigError("unsupported STFT window '" + window + "' (only hann)");
}

void SpectralConfig::validate() const {
    if (!(rolloff_percent > 0.0 && rolloff_percent < 1.0)) throw ConfigError("rolloff_percent must be in (0, 1)");
    if (!(bandwidth_order >= 1.0)) throw ConfigError("bandwidth_order must be >= 1");
    if (contrast_bands < 1) throw ConfigError("contrast_bands must be >= 1");
    if (!(contrast_quantile > 0.0 && contrast_quantile < 1.0)) throw ConfigError("contrast_quantile must be in (0, 1)");
}

void MfccConfig::validate(double rate_hz) const {
    if (n_mels < 1 || n_mfcc < 1 || n_mfcc > n_mels) throw ConfigError("MFCC needs 1 <= n_mfcc <= n_mels");
    const double top = fmax_hz > 0.0 ? fmax_hz : rate_hz / 2.0;
    if (!(fmin_hz >= 0.0 && fmin_hz < top && top <= rate_hz / 2.0 + 1e-9)) {
        throw ConfigError("MFCC needs 0 <= fmin < fmax <= rate/2");
    }
}

void FeatureConfig::validate() const {
    stft.validate();
    spectral.validate();
    if (mfcc.n_mels < 1 || mfcc.n_mfcc < 1 || mfcc.n_mfcc > mfcc.n_mels) {
        throw ConfigError("MFCC needs 1 <= n_mfcc <= n_mels");
    }
}

void FeatureVector::append(const FeatureVector& other, std::string_view prefix) {
    for (const auto& n : other.names) names.push_back(prefix.empty() ? n : std::string(prefix) + "." + n);
    values.insert(values.end(), other.values.begin(), other.values.end());
    for (const auto& f : other.flags) flags.push_back(prefix.empty() ? f : std::string(prefix) + ": " + f);
}

FeatureVector simple_stats(std::span<const double> band) {
    if (band.empty()) throw DataError("simple_stats of an empty band");
    const auto m = moments(band);
    const auto [lo, hi] = std::minmax_element(band.begin(), band.end());
    return {{"mean", "std", "min", "max"}, {m.mean, m.std, *lo, *hi}, {}};
}

FeatureVector hos_features(std::span<const double> band) {
    if (band.empty()) throw DataError("hos_features of an empty band");
    const auto m = moments(band);
    FeatureVector out;
    out.names = {"skewness", "kurtosis", "shannon_entropy", "energy"};
    double skew = 0.0;
    double kurt = 0.0;
    if (m.std > 0.0) {
        const double s2 = m.std * m.std;
        skew = m.m3 / (s2 * m.std);
        kurt = m.m4 / (s2 * s2);
    } else {
        out.flags.emplace_back("zero variance: skewness and kurtosis set to 0");
    }
    double entropy = 0.0;
    double energy = 0.0;
    for (double d : band) {
        const double p = d * d;
        if (p > 0.0) entropy -= p * std::log(p);
        energy += p;
    }
    energy /= static_cast<double>(band.size());
    out.values = {skew, kurt, entropy, energy};
    return out;
}

std::vector<std::vector<double>> stft_magnitude(std::span<const double> band, const StftConfig& stft) {
    stft.validate();
    const RealFft fft(stft.frame_len);
    const auto window = hann(stft.frame_len);
    auto frames = frame_signal(band, stft);
    std::vector<std::vector<double>> out;
    out.reserve(frames.size());
    for (auto& f : frames) {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] *= window[i];
        out.push_back(fft.magnitude(f));
    }
    return out;
}

std::vector<double> spectrum_features(std::span<const double> mag, double bin_hz, const SpectralConfig& spec,
                                      bool* silent) {
    const std::size_t bins = mag.size();
    const double nyquist = bin_hz * static_cast<double>(bins - 1);

    // Contrast sub-bands: [0, nyq/2^B), [nyq/2^B, nyq/2^(B-1)), ..., [nyq/2, nyq].
    const int n_sub = spec.contrast_bands + 1;
    std::vector<double> edges{0.0};
    for (int b = spec.contrast_bands; b >= 0; --b) edges.push_back(nyquist / std::ldexp(1.0, b));

    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(n_sub) + 4);
    const double total = std::accumulate(mag.begin(), mag.end(), 0.0);
    double centroid = 0.0;
    double bandwidth = 0.0;
    double rolloff = 0.0;
    if (total > 0.0) {
        for (std::size_t k = 0; k < bins; ++k) centroid += mag[k] * (k * bin_hz);
        centroid /= total;
        for (std::size_t k = 0; k < bins; ++k) {
            bandwidth += (mag[k] / total) * std::pow(std::abs(k * bin_hz - centroid), spec.bandwidth_order);
        }
        bandwidth = std::pow(bandwidth, 1.0 / spec.bandwidth_order);
        double energy = 0.0;
        for (double m : mag) energy += m * m;
        double cumulative = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            cumulative += mag[k] * mag[k];
            if (cumulative >= spec.rolloff_percent * energy) {
                rolloff = k * bin_hz;
                break;
            }
        }
    } else if (silent) {
        *silent = true;
    }
    row.push_back(centroid);
    row.push_back(bandwidth);
    std::size_t k = 0;
    for (int s = 0; s < n_sub; ++s) {
        const std::size_t begin = k;
        const bool last = s == n_sub - 1;
        while (k < bins && (last || k * bin_hz < edges[static_cast<std::size_t>(s) + 1] - 1e-9)) ++k;
        if (begin == k) {
            row.push_back(0.0);
            continue;
        }
        std::vector<double> power;
        for (std::size_t j = begin; j < k; ++j) power.push_back(mag[j] * mag[j]);
        std::sort(power.begin(), power.end());
        const auto q = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(spec.contrast_quantile * static_cast<double>(power.size()))));
        const double valley =
            std::accumulate(power.begin(), power.begin() + static_cast<std::ptrdiff_t>(q), 0.0) / static_cast<double>(q);
        const double peak =
            std::accumulate(power.end() - static_cast<std::ptrdiff_t>(q), power.end(), 0.0) / static_cast<double>(q);
        row.push_back(db(peak) - db(valley));
    }
    row.push_back(rolloff);
    return row;
}

FrameMatrix spectral_features(std::span<const double> band, const StftConfig& stft, const SpectralConfig& spec,
                              double rate_hz) {
    spec.validate();
    if (!(rate_hz > 0.0)) throw ConfigError("spectral features need a positive sample rate");
    const auto mags = stft_magnitude(band, stft);
    const auto frames = frame_signal(band, stft);
    const double bin_hz = rate_hz / stft.frame_len;

    FrameMatrix out;
    out.columns = spectral_columns(spec);
    bool silent = false;
    for (std::size_t t = 0; t < mags.size(); ++t) {
        auto row = spectrum_features(mags[t], bin_hz, spec, &silent);
        row.push_back(zero_crossing_rate(frames[t]));
        out.frames.push_back(std::move(row));
    }
    if (silent) out.flags.emplace_back("all-zero frame: centroid/bandwidth/rolloff set to 0");
    return out;
}

double mel_scale(double hz) {
    if (hz < 0.0) throw ConfigError("Mel scale is undefined for negative frequency");
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filterbank(int n_mels, int frame_len, double rate_hz, double fmin_hz,
                                                double fmax_hz) {
    const int bins = frame_len / 2 + 1;
    const double lo = mel_scale(fmin_hz);
    const double hi = mel_scale(fmax_hz);
    std::vector<double> edge_hz(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edge_hz.size(); ++i) {
        edge_hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }
    std::vector<std::vector<double>> fb(static_cast<std::size_t>(n_mels), std::vector<double>(static_cast<std::size_t>(bins)));
    for (std::size_t m = 0; m < fb.size(); ++m) {
        const double left = edge_hz[m];
        const double center = edge_hz[m + 1];
        const double right = edge_hz[m + 2];
        const double area_norm = 2.0 / (right - left);
        for (int k = 0; k < bins; ++k) {
            const double f = k * rate_hz / frame_len;
            const double rise = (f - left) / (center - left);
            const double fall = (right - f) / (right - center);
            fb[m][static_cast<std::size_t>(k)] = std::max(0.0, std::min(rise, fall)) * area_norm;
        }
    }
    return fb;
}

std::vector<std::vector<double>> dct_matrix(int n_out, int n_in) {
    std::vector<std::vector<double>> d(static_cast<std::size_t>(n_out), std::vector<double>(static_cast<std::size_t>(n_in)));
    for (int k = 0; k < n_out; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n_in);
        for (int n = 0; n < n_in; ++n) {
            d[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] =
                scale * std::cos(M_PI * k * (2.0 * n + 1.0) / (2.0 * n_in));
        }
    }
    return d;
}

FrameMatrix mfcc(std::span<const double> band, const StftConfig& stft, const MfccConfig& cfg, double rate_hz) {
    cfg.validate(rate_hz);
    const double fmax = cfg.fmax_hz > 0.0 ? cfg.fmax_hz : rate_hz / 2.0;
    const auto fb = mel_filterbank(cfg.n_mels, stft.frame_len, rate_hz, cfg.fmin_hz, fmax);
    const auto dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);
    const auto mags = stft_magnitude(band, stft);
    FrameMatrix out;
    out.columns = mfcc_columns(cfg);
    std::vector<double> log_mel(static_cast<std::size_t>(cfg.n_mels));
    for (const auto& mag : mags) {
        for (std::size_t m = 0; m < fb.size(); ++m) {
            double e = 0.0;
            for (std::size_t k = 0; k < mag.size(); ++k) e += fb[m][k] * mag[k] * mag[k];
            log_mel[m] = std::log(std::max(e, 1e-10));
        }
        std::vector<double> row(dct.size());
        for (std::size_t c = 0; c < dct.size(); ++c) {
            row[c] = std::inner_product(dct[c].begin(), dct[c].end(), log_mel.begin(), 0.0);
        }
        out.frames.push_back(std::move(row));
    }
    return out;
}

FeatureVector aggregate_frames(const FrameMatrix& fm) {
    if (fm.frames.empty()) throw DataError("cannot aggregate zero frames");
    FeatureVector out;
    out.flags = fm.flags;
    out.names = aggregated_names(fm.columns);
    std::vector<double> col(fm.frames.size());
    for (std::size_t c = 0; c < fm.columns.size(); ++c) {
        for (std::size_t t = 0; t < fm.frames.size(); ++t) col[t] = fm.frames[t][c];
        const auto m = moments(col);
        const double skew = m.std > 0.0 ? m.m3 / (m.std * m.std * m.std) : 0.0;
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        for (double v : {m.mean, m.std, skew, sorted.back(), median, sorted.front()}) out.values.push_back(v);
    }
    return out;
}

FeatureSet parse_feature_set(std::string_view s) {
    if (s == "simple") return FeatureSet::Simple;
    if (s == "hos_spectral") return FeatureSet::HosSpectral;
    if (s == "full") return FeatureSet::Full;
    throw ConfigError("unknown feature set '" + std::string(s) + "' (expected simple|hos_spectral|full)");
}

std::string_view to_string(FeatureSet f) {
    switch (f) {
        case FeatureSet::Simple: return "simple";
        case FeatureSet::HosSpectral: return "hos_spectral";
        case FeatureSet::Full: return "full";
    }
    return "?";
}

bool uses_mfcc(Decomposition d, FeatureSet set) {
    return set == FeatureSet::Full && d != Decomposition::EmdDwt && d != Decomposition::EemdDwt;
}

FeatureVector band_features(std::span<const double> band, double rate_hz, FeatureSet set, bool with_mfcc,
                            const FeatureConfig& cfg) {
    FeatureVector out = simple_stats(band);
    if (set == FeatureSet::Simple) return out;
    out.append(hos_features(band));
    out.append(aggregate_frames(spectral_features(band, cfg.stft, cfg.spectral, rate_hz)));
    if (set == FeatureSet::Full && with_mfcc) out.append(aggregate_frames(mfcc(band, cfg.stft, cfg.mfcc, rate_hz)));
    return out;
}

std::vector<std::string> feature_names(Decomposition d, const DecompositionConfig& dcfg, FeatureSet set,
                                       const FeatureConfig& fcfg) {
    const auto per_band = band_feature_names(set, uses_mfcc(d, set), fcfg);
    std::vector<std::string> names;
    for (const auto& band : nominal_band_names(d, dcfg)) {
        for (const auto& f : per_band) names.push_back(band + "." + f);
    }
    return names;
}

BandSet decompose_cycle(const CycleRecord& cycle, const FeatureBuildOptions& opts) {
    DecompositionConfig cfg = opts.decomposition_cfg;
    cfg.eemd.seed = derive_seed(opts.seed, {fnv1a(cycle.cycle_id)});
    return decompose(cycle.samples, cycle.sample_rate_hz, opts.decomposition, cfg);
}

FeatureBuild build_feature_matrix(const std::vector<CycleRecord>& cycles, const FeatureBuildOptions& opts) {
    opts.decomposition_cfg.validate();
    opts.feature_cfg.validate();
    const auto names = feature_names(opts.decomposition, opts.decomposition_cfg, opts.feature_set, opts.feature_cfg);
    const std::size_t nominal = nominal_band_count(opts.decomposition, opts.decomposition_cfg);
    const bool with_mfcc = uses_mfcc(opts.decomposition, opts.feature_set);

    struct Slot {
        std::vector<double> values;
        std::string error;
    };
    std::vector<Slot> slots(cycles.size());
    parallel_for(cycles.size(), opts.workers, [&](std::size_t i) {
        const auto& c = cycles[i];
        try {
            const auto bands = decompose_cycle(c, opts);
            if (bands.bands.size() != nominal) {
                slots[i].error = "decomposition produced " + std::to_string(bands.bands.size()) + " of " +
                                 std::to_string(nominal) + " bands";
                return;
            }
            FeatureVector fv;
            for (std::size_t b = 0; b < bands.bands.size(); ++b) {
                const auto& tag = bands.tags[b];
                fv.append(band_features(bands.bands[b], tag.sample_rate_hz, opts.feature_set, with_mfcc, opts.feature_cfg),
                          tag.name());
            }
            if (fv.names != names) {
                slots[i].error = "feature layout mismatch";
                return;
            }
            if (!std::all_of(fv.values.begin(), fv.values.end(), [](double v) { return std::isfinite(v); })) {
                slots[i].error = "non-finite feature value";
                return;
            }
            slots[i].values = std::move(fv.values);
        } catch (const Error& e) {
            slots[i].error = e.what();
        }
    });

    FeatureBuild out;
    out.matrix.feature_names = names;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        if (!slots[i].error.empty()) {
            out.dropped.emplace_back(cycles[i].cycle_id, slots[i].error);
            continue;
        }
        out.matrix.cycle_ids.push_back(cycles[i].cycle_id);
        out.matrix.groups.push_back(cycles[i].meta.patient_id);
        out.matrix.labels.push_back(cycles[i].label);
        out.matrix.rows.push_back(std::move(slots[i].values));
    }
    auto& prov = out.matrix.provenance;
    prov["decomposition"] = std::string(to_string(opts.decomposition));
    prov["feature_set"] = std::string(to_string(opts.feature_set));
    prov["seed"] = opts.seed;
    prov["stft"] = {{"frame_len", opts.feature_cfg.stft.frame_len}, {"hop", opts.feature_cfg.stft.hop},
                    {"window", opts.feature_cfg.stft.window}};
    prov["spectral"] = {{"bandwidth_order", opts.feature_cfg.spectral.bandwidth_order},
                        {"rolloff_percent", opts.feature_cfg.spectral.rolloff_percent},
                        {"contrast_bands", opts.feature_cfg.spectral.contrast_bands},
                        {"contrast_quantile", opts.feature_cfg.spectral.contrast_quantile}};
    prov["mfcc"] = {{"n_mels", opts.feature_cfg.mfcc.n_mels}, {"n_mfcc", opts.feature_cfg.mfcc.n_mfcc},
                    {"fmin_hz", opts.feature_cfg.mfcc.fmin_hz}, {"fmax_hz", opts.feature_cfg.mfcc.fmax_hz}};
    const auto& e = opts.decomposition_cfg.eemd;
    prov["emd"] = {{"max_imfs", e.emd.max_imfs}, {"max_sift_iters", e.emd.max_sift_iters},
                   {"keep_modes", e.emd.keep_modes}, {"sd_threshold", e.emd.sd_threshold}};
    prov["eemd"] = {{"ensembles", e.ensembles}, {"noise_std_fraction", e.noise_std_fraction}};
    prov["dwt"] = {{"wavelet", opts.decomposition_cfg.dwt.wavelet}, {"levels", opts.decomposition_cfg.dwt.levels},
                   {"keep_detail_levels", opts.decomposition_cfg.dwt.keep_detail_levels},
                   {"chain_keep_detail_levels", opts.decomposition_cfg.chain_dwt.keep_detail_levels},
                   {"boundary", "periodization"}};
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& [id, why] : out.dropped) dropped.push_back({{"cycle_id", id}, {"reason", why}});
    prov["dropped"] = dropped;
    return out;
}

}  // namespace auscult
