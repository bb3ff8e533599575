#include "auscult/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "auscult/error.hpp"
#include "auscult/wavelet.hpp"

namespace auscult {

namespace {

struct Knots {
    std::vector<double> pos;
    std::vector<double> val;
};

struct Extrema {
    Knots maxima;
    Knots minima;
};

// Plateaus count once, at their midpoint. Endpoints are never extrema.
Extrema find_extrema(std::span<const double> x) {
    Extrema e;
    const std::size_t n = x.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        if (x[i] == x[i - 1]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && x[j + 1] == x[i]) ++j;
        if (j + 1 >= n) break;
        const bool above_left = x[i] > x[i - 1];
        const bool above_right = x[i] > x[j + 1];
        const double mid = 0.5 * static_cast<double>(i + j);
        if (above_left && above_right) {
            e.maxima.pos.push_back(mid);
            e.maxima.val.push_back(x[i]);
        } else if (!above_left && !above_right) {
            e.minima.pos.push_back(mid);
            e.minima.val.push_back(x[i]);
        }
        i = j + 1;
    }
    return e;
}

// Two extrema reflected about each end sample.
Knots mirrored(const Knots& k, std::size_t n) {
    const std::size_t m = k.pos.size();
    const std::size_t r = std::min<std::size_t>(2, m);
    const double last = static_cast<double>(n - 1);
    Knots out;
    for (std::size_t i = r; i-- > 0;) {
        out.pos.push_back(-k.pos[i]);
        out.val.push_back(k.val[i]);
    }
    out.pos.insert(out.pos.end(), k.pos.begin(), k.pos.end());
    out.val.insert(out.val.end(), k.val.begin(), k.val.end());
    for (std::size_t i = 0; i < r; ++i) {
        out.pos.push_back(2.0 * last - k.pos[m - 1 - i]);
        out.val.push_back(k.val[m - 1 - i]);
    }
    return out;
}

bool is_monotonic(std::span<const double> x) {
    bool inc = true;
    bool dec = true;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (x[i] < x[i - 1]) inc = false;
        if (x[i] > x[i - 1]) dec = false;
    }
    return inc || dec;
}

void check_emd_input(std::span<const double> signal) {
    if (signal.size() < 8) throw DecompositionError("EMD needs at least 8 samples");
    if (std::all_of(signal.begin(), signal.end(), [&](double v) { return v == signal[0]; })) {
        throw DecompositionError("EMD of a constant signal is undefined");
    }
    for (double v : signal) {
        if (!std::isfinite(v)) throw DecompositionError("EMD input contains non-finite samples");
    }
}

std::pair<Signal, SiftOutcome> sift(const Signal& start, const EmdConfig& cfg) {
    Signal h = start;
    SiftOutcome outcome;
    const std::size_t n = h.size();
    for (int it = 0; it < cfg.max_sift_iters; ++it) {
        const auto ext = find_extrema(h);
        if (ext.maxima.pos.empty() || ext.minima.pos.empty()) break;
        const auto up = mirrored(ext.maxima, n);
        const auto lo = mirrored(ext.minima, n);
        const Signal upper = natural_spline(up.pos, up.val, n);
        const Signal lower = natural_spline(lo.pos, lo.val, n);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mean = 0.5 * (upper[i] + lower[i]);
            num += mean * mean;
            den += h[i] * h[i];
            h[i] -= mean;
        }
        outcome.iterations = it + 1;
        const double sd = den > 0.0 ? num / den : 0.0;
        const auto c = count_extrema(h);
        const auto extrema = static_cast<long long>(c.maxima + c.minima);
        if (sd < cfg.sd_threshold && std::llabs(extrema - static_cast<long long>(c.zero_crossings)) <= 1) {
            outcome.by_criterion = true;
            break;
        }
    }
    return {std::move(h), outcome};
}

double population_std(std::span<const double> x) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double acc = 0.0;
    for (double v : x) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(x.size()));
}

BandTag imf_tag(BandMethod m, int imf, double rate) { return {m, imf, 0, rate, 0.0, rate / 2.0}; }

}  // namespace

void EmdConfig::validate() const {
    if (max_imfs < 1 || max_sift_iters < 1) throw ConfigError("EMD limits must be >= 1");
    if (keep_modes < 1 || keep_modes > max_imfs) throw ConfigError("EMD keep_modes must be in [1, max_imfs]");
    if (!(sd_threshold > 0.0)) throw ConfigError("EMD sd_threshold must be positive");
}

void EemdConfig::validate() const {
    emd.validate();
    if (ensembles < 1) throw ConfigError("EEMD ensembles must be >= 1");
    if (!(noise_std_fraction >= 0.0)) throw ConfigError("EEMD noise_std_fraction must be >= 0");
}

void DwtConfig::validate() const {
    wavelet::require_supported(wavelet);
    if (levels < 1 || keep_detail_levels < 1 || keep_detail_levels > levels) {
        throw ConfigError("DWT needs levels >= keep_detail_levels >= 1");
    }
}

void DecompositionConfig::validate() const {
    eemd.validate();
    dwt.validate();
    chain_dwt.validate();
}

std::string BandTag::name() const {
    std::string s;
    if (imf_index > 0) s = "imf" + std::to_string(imf_index);
    if (dwt_level > 0) s += (s.empty() ? "" : "_") + std::string("d") + std::to_string(dwt_level);
    return s.empty() ? "raw" : s;
}

ExtremaCount count_extrema(std::span<const double> x) {
    const auto e = find_extrema(x);
    ExtremaCount c{e.maxima.pos.size(), e.minima.pos.size(), 0};
    int last_sign = 0;
    for (double v : x) {
        const int s = (v > 0.0) - (v < 0.0);
        if (s == 0) continue;
        if (last_sign != 0 && s != last_sign) ++c.zero_crossings;
        last_sign = s;
    }
    return c;
}

Signal natural_spline(std::span<const double> xs, std::span<const double> ys, std::size_t n) {
    const std::size_t m = xs.size();
    if (m < 2 || ys.size() != m) throw DecompositionError("spline needs at least two knots");
    std::vector<double> h(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        h[i] = xs[i + 1] - xs[i];
        if (!(h[i] > 0.0)) throw DecompositionError("spline knots must be strictly increasing");
    }
    // Second derivatives; natural ends. Thomas algorithm on the interior.
    std::vector<double> second(m, 0.0);
    if (m > 2) {
        const std::size_t k = m - 2;
        std::vector<double> diag(k), upper(k), rhs(k);
        for (std::size_t i = 0; i < k; ++i) {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for (std::size_t i = 1; i < k; ++i) {
            const double w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        second[k] = rhs[k - 1] / diag[k - 1];
        for (std::size_t i = k - 1; i-- > 0;) second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
    }

    Signal out(n);
    std::size_t seg = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double x = static_cast<double>(t);
        while (seg + 2 < m && x > xs[seg + 1]) ++seg;
        const double a = xs[seg + 1] - x;
        const double b = x - xs[seg];
        const double hh = h[seg];
        out[t] = (second[seg] * a * a * a + second[seg + 1] * b * b * b) / (6.0 * hh) +
                 (ys[seg] / hh - second[seg] * hh / 6.0) * a + (ys[seg + 1] / hh - second[seg + 1] * hh / 6.0) * b;
    }
    return out;
}

EmdResult emd_full(std::span<const double> signal, const EmdConfig& cfg) {
    cfg.validate();
    check_emd_input(signal);
    EmdResult result;
    Signal residue(signal.begin(), signal.end());
    for (int k = 0; k < cfg.max_imfs; ++k) {
        const auto c = count_extrema(residue);
        if (c.maxima + c.minima < 3 || is_monotonic(residue)) break;
        auto [imf, outcome] = sift(residue, cfg);
        for (std::size_t i = 0; i < residue.size(); ++i) residue[i] -= imf[i];
        result.imfs.push_back(std::move(imf));
        result.sifts.push_back(outcome);
    }
    result.residue = std::move(residue);
    return result;
}

BandSet emd(std::span<const double> signal, const EmdConfig& cfg, double rate_hz) {
    auto full = emd_full(signal, cfg);
    BandSet out;
    out.source_rate_hz = rate_hz;
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(cfg.keep_modes), full.imfs.size());
    for (std::size_t i = 0; i < keep; ++i) {
        out.bands.push_back(std::move(full.imfs[i]));
        out.tags.push_back(imf_tag(BandMethod::Emd, static_cast<int>(i) + 1, rate_hz));
    }
    out.residual = std::move(full.residue);
    out.notes.push_back("emd: " + std::to_string(full.imfs.size()) + " IMFs extracted, " + std::to_string(keep) +
                        " kept");
    return out;
}

BandSet eemd(std::span<const double> signal, const EemdConfig& cfg, double rate_hz) {
    cfg.validate();
    check_emd_input(signal);
    const std::size_t n = signal.size();
    const auto keep = static_cast<std::size_t>(cfg.emd.keep_modes);
    const double noise_std = cfg.noise_std_fraction * population_std(signal);

    std::vector<Signal> sums(keep, Signal(n, 0.0));
    Signal residue_sum(n, 0.0);
    std::size_t max_modes = 0;
    std::size_t min_modes = keep;
    for (int w = 0; w < cfg.ensembles; ++w) {
        Signal member(signal.begin(), signal.end());
        if (noise_std > 0.0) {
            std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(w));
            std::normal_distribution<double> noise(0.0, noise_std);
            for (double& v : member) v += noise(rng);
        }
        const auto run = emd_full(member, cfg.emd);
        const std::size_t modes = std::min(keep, run.imfs.size());
        max_modes = std::max(max_modes, modes);
        min_modes = std::min(min_modes, modes);
        for (std::size_t l = 0; l < modes; ++l) {
            for (std::size_t i = 0; i < n; ++i) sums[l][i] += run.imfs[l][i];
        }
        for (std::size_t i = 0; i < n; ++i) residue_sum[i] += run.residue[i];
    }

    BandSet out;
    out.source_rate_hz = rate_hz;
    const auto w = static_cast<double>(cfg.ensembles);
    for (std::size_t l = 0; l < max_modes; ++l) {
        for (double& v : sums[l]) v /= w;
        out.bands.push_back(std::move(sums[l]));
        out.tags.push_back(imf_tag(BandMethod::Eemd, static_cast<int>(l) + 1, rate_hz));
    }
    for (double& v : residue_sum) v /= w;
    out.residual = std::move(residue_sum);
    out.notes.push_back("eemd: " + std::to_string(cfg.ensembles) + " ensembles, modes per run in [" +
                        std::to_string(min_modes) + ", " + std::to_string(max_modes) + "]");
    return out;
}

BandSet dwt(std::span<const double> signal, const DwtConfig& cfg, double rate_hz) {
    cfg.validate();
    if (signal.size() < wavelet::db8_lowpass().size()) {
        throw DecompositionError("DWT needs at least 16 samples for db8");
    }
    auto dec = wavelet::decompose(signal, cfg.levels);
    BandSet out;
    out.source_rate_hz = rate_hz;
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(cfg.keep_detail_levels), dec.details.size());
    for (std::size_t j = 0; j < keep; ++j) {
        const double scale = std::ldexp(1.0, static_cast<int>(j) + 1);
        out.bands.push_back(std::move(dec.details[j]));
        out.tags.push_back({BandMethod::Dwt, 0, static_cast<int>(j) + 1, rate_hz / scale, rate_hz / (2.0 * scale),
                            rate_hz / scale});
    }
    if (static_cast<int>(dec.details.size()) < cfg.levels) {
        out.notes.push_back("dwt: stopped after " + std::to_string(dec.details.size()) + " of " +
                            std::to_string(cfg.levels) + " levels (signal shorter than filter)");
    }
    std::string counts = "dwt: detail lengths";
    for (std::size_t j = 0; j < keep; ++j) counts += " " + std::to_string(out.bands[j].size());
    out.notes.push_back(counts + ", approximation length " + std::to_string(dec.approx.size()) + " discarded");
    return out;
}

BandSet chain_decompose(std::span<const double> signal, ChainFirst first, const EemdConfig& eemd_cfg,
                        const DwtConfig& dwt_cfg, double rate_hz) {
    BandSet imfs = first == ChainFirst::Emd ? emd(signal, eemd_cfg.emd, rate_hz) : eemd(signal, eemd_cfg, rate_hz);
    const BandMethod method = first == ChainFirst::Emd ? BandMethod::EmdDwt : BandMethod::EemdDwt;
    BandSet out;
    out.source_rate_hz = rate_hz;
    out.notes = imfs.notes;
    for (std::size_t i = 0; i < imfs.bands.size(); ++i) {
        auto details = dwt(imfs.bands[i], dwt_cfg, rate_hz);
        for (std::size_t j = 0; j < details.bands.size(); ++j) {
            BandTag tag = details.tags[j];
            tag.method = method;
            tag.imf_index = static_cast<int>(i) + 1;
            out.bands.push_back(std::move(details.bands[j]));
            out.tags.push_back(tag);
        }
        for (auto& note : details.notes) out.notes.push_back("imf" + std::to_string(i + 1) + " " + note);
    }
    return out;
}

BandSet identity_decompose(std::span<const double> signal, double rate_hz) {
    BandSet out;
    out.source_rate_hz = rate_hz;
    out.bands.emplace_back(signal.begin(), signal.end());
    out.tags.push_back({BandMethod::Raw, 0, 0, rate_hz, 0.0, rate_hz / 2.0});
    return out;
}

Decomposition parse_decomposition(std::string_view s) {
    if (s == "none") return Decomposition::None;
    if (s == "emd") return Decomposition::Emd;
    if (s == "eemd") return Decomposition::Eemd;
    if (s == "dwt") return Decomposition::Dwt;
    if (s == "emd+dwt") return Decomposition::EmdDwt;
    if (s == "eemd+dwt") return Decomposition::EemdDwt;
    throw ConfigError("unknown decomposition '" + std::string(s) + "' (expected none|emd|eemd|dwt|emd+dwt|eemd+dwt)");
}

std::string_view to_string(Decomposition d) {
    switch (d) {
        case Decomposition::None: return "none";
        case Decomposition::Emd: return "emd";
        case Decomposition::Eemd: return "eemd";
        case Decomposition::Dwt: return "dwt";
        case Decomposition::EmdDwt: return "emd+dwt";
        case Decomposition::EemdDwt: return "eemd+dwt";
    }
    return "?";
}

std::vector<std::string> nominal_band_names(Decomposition d, const DecompositionConfig& cfg) {
    std::vector<std::string> names;
    const int modes = cfg.eemd.emd.keep_modes;
    switch (d) {
        case Decomposition::None:
            names.push_back("raw");
            break;
        case Decomposition::Emd:
        case Decomposition::Eemd:
            for (int i = 1; i <= modes; ++i) names.push_back(BandTag{BandMethod::Emd, i}.name());
            break;
        case Decomposition::Dwt:
            for (int j = 1; j <= cfg.dwt.keep_detail_levels; ++j) names.push_back(BandTag{BandMethod::Dwt, 0, j}.name());
            break;
        case Decomposition::EmdDwt:
        case Decomposition::EemdDwt:
            for (int i = 1; i <= modes; ++i) {
                for (int j = 1; j <= cfg.chain_dwt.keep_detail_levels; ++j) {
                    names.push_back(BandTag{BandMethod::EmdDwt, i, j}.name());
                }
            }
            break;
    }
    return names;
}

std::size_t nominal_band_count(Decomposition d, const DecompositionConfig& cfg) {
    return nominal_band_names(d, cfg).size();
}

BandSet decompose(std::span<const double> signal, double rate_hz, Decomposition d, const DecompositionConfig& cfg) {
    switch (d) {
        case Decomposition::None: return identity_decompose(signal, rate_hz);
        case Decomposition::Emd: return emd(signal, cfg.eemd.emd, rate_hz);
        case Decomposition::Eemd: return eemd(signal, cfg.eemd, rate_hz);
        case Decomposition::Dwt: return dwt(signal, cfg.dwt, rate_hz);
        case Decomposition::EmdDwt: return chain_decompose(signal, ChainFirst::Emd, cfg.eemd, cfg.chain_dwt, rate_hz);
        case Decomposition::EemdDwt: return chain_decompose(signal, ChainFirst::Eemd, cfg.eemd, cfg.chain_dwt, rate_hz);
    }
    throw ConfigError("unknown decomposition");
}

}  // namespace auscult
