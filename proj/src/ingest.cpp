#include "auscult/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "auscult/error.hpp"
#include "auscult/parallel.hpp"
#include "auscult/wav.hpp"
#include "auscult/wavelet.hpp"

namespace auscult {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

double parse_time(std::string_view tok, int line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric time '" + std::string(tok) + "'", line);
    }
    return v;
}

bool parse_flag(std::string_view tok, int line) {
    if (tok == "0") return false;
    if (tok == "1") return true;
    throw ParseError("flag must be 0 or 1, got '" + std::string(tok) + "'", line);
}

double bessel_i0(double x) {
    // Power series; converges quickly for the beta values used here.
    double sum = 1.0;
    double term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

double median_abs(std::span<const double> v) {
    std::vector<double> a(v.size());
    std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
    const std::size_t mid = a.size() / 2;
    std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
    double m = a[mid];
    if (a.size() % 2 == 0) {
        const double lower = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

}  // namespace

LabelScheme parse_scheme(std::string_view s) {
    if (s == "general") return LabelScheme::General;
    if (s == "pure") return LabelScheme::Pure;
    throw ConfigError("unknown label scheme '" + std::string(s) + "' (expected general|pure)");
}

std::string_view to_string(LabelScheme s) { return s == LabelScheme::General ? "general" : "pure"; }

std::optional<Label> map_label(bool crackle, bool wheeze, LabelScheme scheme) {
    if (scheme == LabelScheme::General) return crackle ? Label::Crackle : Label::NoCrackle;
    if (wheeze) return std::nullopt;
    return crackle ? Label::Crackle : Label::NoCrackle;
}

std::vector<AnnotationRow> parse_annotations(std::string_view text) {
    std::vector<AnnotationRow> rows;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 4) {
            throw ParseError("expected 4 columns, found " + std::to_string(tok.size()), line_no);
        }
        AnnotationRow row{parse_time(tok[0], line_no), parse_time(tok[1], line_no), parse_flag(tok[2], line_no),
                          parse_flag(tok[3], line_no)};
        if (row.start_s < 0.0) throw ParseError("negative start time", line_no);
        if (!(row.end_s > row.start_s)) throw ParseError("end time must exceed start time", line_no);
        rows.push_back(row);
    }
    return rows;
}

RecordingMetadata parse_filename_metadata(std::string_view name) {
    const std::string stem = std::filesystem::path(name).stem().string();
    std::vector<std::string> tok;
    std::stringstream ss(stem);
    for (std::string t; std::getline(ss, t, '_');) tok.push_back(t);
    if (!stem.empty() && stem.back() == '_') tok.emplace_back();
    if (tok.size() != 5 || std::any_of(tok.begin(), tok.end(), [](const auto& t) { return t.empty(); })) {
        throw MetadataError("'" + std::string(name) + "' does not have 5 underscore-separated tokens");
    }
    return {tok[0], tok[1], tok[2], tok[3], tok[4]};
}

RecordingMetadata metadata_or_opaque(std::string_view name) {
    try {
        return parse_filename_metadata(name);
    } catch (const MetadataError&) {
        const std::string stem = std::filesystem::path(name).stem().string();
        return {stem, stem, "unknown", "unknown", "unknown"};
    }
}

std::vector<CycleRecord> slice_cycles(const AudioClip& clip, const std::vector<AnnotationRow>& rows,
                                      LabelScheme scheme, const RecordingMetadata& meta, std::string_view stem,
                                      std::vector<std::string>* warnings) {
    std::vector<CycleRecord> out;
    const auto n = static_cast<long long>(clip.samples.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto label = map_label(row.crackle, row.wheeze, scheme);
        if (!label) continue;
        // std::llround rounds half away from zero.
        long long begin = std::llround(row.start_s * clip.sample_rate_hz);
        long long end = std::llround(row.end_s * clip.sample_rate_hz);
        const std::string id = std::string(stem) + "_" + std::to_string(i);
        if (end > n) {
            if (warnings) {
                std::ostringstream msg;
                msg << id << ": annotation end " << row.end_s << " s exceeds clip length " << clip.duration_s()
                    << " s; clamped";
                warnings->push_back(msg.str());
            }
            end = n;
            begin = std::min(begin, n);
        }
        if (end <= begin) {
            if (warnings) warnings->push_back(id + ": empty after clamping; skipped");
            continue;
        }
        CycleRecord rec;
        rec.cycle_id = id;
        rec.meta = meta;
        rec.sample_rate_hz = clip.sample_rate_hz;
        rec.label = *label;
        rec.samples.assign(clip.samples.begin() + begin, clip.samples.begin() + end);
        out.push_back(std::move(rec));
    }
    return out;
}

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
    if (target_rate_hz <= 0) throw ConfigError("target rate must be positive");
    const int source = clip.sample_rate_hz;
    if (target_rate_hz > source) {
        throw UnsupportedOperation("resampling from " + std::to_string(source) + " Hz up to " +
                                   std::to_string(target_rate_hz) + " Hz is not supported (downsampling only)");
    }
    if (target_rate_hz == source) return clip;

    const long long g = std::gcd(source, target_rate_hz);
    const long long up = target_rate_hz / g;    // L
    const long long down = source / g;          // M

    // Design at the upsampled rate: cutoff 0.45*target, transition 0.1*target,
    // so the stopband begins exactly at the new Nyquist frequency.
    constexpr double kAttenuationDb = 60.0;
    const double beta = 0.1102 * (kAttenuationDb - 8.7);
    const double cutoff = 0.45 / static_cast<double>(down);
    const double transition = 0.1 / static_cast<double>(down);
    const auto half = static_cast<long long>(
        std::ceil((kAttenuationDb - 7.95) / (2.285 * 2.0 * M_PI * transition) / 2.0));
    const double i0_beta = bessel_i0(beta);
    auto tap = [&](long long j) {
        if (std::llabs(j) > half) return 0.0;
        const double r = static_cast<double>(j) / static_cast<double>(half);
        const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
        const double arg = 2.0 * cutoff * static_cast<double>(j);
        const double sinc = (j == 0) ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
        return static_cast<double>(up) * 2.0 * cutoff * sinc * window;
    };

    // Polyphase table: phase p holds taps j = p - half + i*up.
    const long long taps_per_phase = (2 * half) / up + 1;
    std::vector<double> table(static_cast<std::size_t>(up * taps_per_phase));
    for (long long p = 0; p < up; ++p) {
        for (long long i = 0; i < taps_per_phase; ++i) {
            table[static_cast<std::size_t>(p * taps_per_phase + i)] = tap(p - half + i * up);
        }
    }

    const auto n_in = static_cast<long long>(clip.samples.size());
    const long long n_out = (n_in * up + down - 1) / down;
    AudioClip out;
    out.sample_rate_hz = target_rate_hz;
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (long long m = 0; m < n_out; ++m) {
        const long long t = m * down;
        const long long phase = (t + half) % up;
        const long long newest = (t + half) / up;  // input index paired with tap i = 0
        const double* h = table.data() + phase * taps_per_phase;
        double acc = 0.0;
        for (long long i = 0; i < taps_per_phase; ++i) {
            const long long idx = newest - i;
            if (idx < 0) break;
            if (idx < n_in) acc += h[i] * clip.samples[static_cast<std::size_t>(idx)];
        }
        out.samples[static_cast<std::size_t>(m)] = acc;
    }
    return out;
}

CycleRecord clip_to_max(CycleRecord cycle, double max_s) {
    if (!(max_s > 0.0)) throw ConfigError("max clip length must be positive");
    const auto limit = static_cast<std::size_t>(std::floor(max_s * cycle.sample_rate_hz + 1e-9));
    if (cycle.samples.size() > limit) cycle.samples.resize(limit);
    return cycle;
}

CycleRecord denoise(CycleRecord cycle) {
    constexpr int kLevels = 5;
    const std::size_t n = cycle.samples.size();
    auto dec = wavelet::decompose(cycle.samples, kLevels);
    if (dec.details.empty() || dec.details.front().empty()) return cycle;
    const double sigma = median_abs(dec.details.front()) / 0.6745;
    const double threshold = sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
    // Hard (keep-or-kill) rule: soft shrinkage biases every surviving
    // coefficient by the threshold, which costs more than it removes at low SNR.
    for (auto& level : dec.details) {
        for (double& c : level) {
            if (std::abs(c) <= threshold) c = 0.0;
        }
    }
    cycle.samples = wavelet::reconstruct(dec);
    return cycle;
}

CycleRecord normalize_amplitude(CycleRecord cycle) {
    double peak = 0.0;
    for (double s : cycle.samples) peak = std::max(peak, std::abs(s));
    if (peak == 0.0) throw DegenerateSignalError(cycle.cycle_id + ": cannot normalize an all-zero cycle");
    for (double& s : cycle.samples) s /= peak;
    return cycle;
}

std::vector<CycleRecord> preprocess_recording(const AudioClip& clip, const std::vector<AnnotationRow>& rows,
                                              const RecordingMetadata& meta, std::string_view stem,
                                              const PreprocessConfig& cfg, std::vector<std::string>* warnings) {
    const AudioClip low = resample(clip, cfg.target_rate_hz);
    auto cycles = slice_cycles(low, rows, cfg.scheme, meta, stem, warnings);
    std::vector<CycleRecord> out;
    out.reserve(cycles.size());
    for (auto& c : cycles) {
        c = clip_to_max(std::move(c), cfg.max_seconds);
        if (cfg.denoise) c = denoise(std::move(c));
        try {
            out.push_back(normalize_amplitude(std::move(c)));
        } catch (const DegenerateSignalError& e) {
            if (warnings) warnings->push_back(std::string(e.what()) + "; skipped");
        }
    }
    return out;
}

CorpusLoad load_corpus(const std::filesystem::path& data_dir, const PreprocessConfig& cfg, int workers) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(data_dir)) throw DataError("data directory '" + data_dir.string() + "' does not exist");
    std::vector<fs::path> wavs;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
    }
    std::sort(wavs.begin(), wavs.end());

    struct Slot {
        std::vector<CycleRecord> cycles;
        std::vector<std::string> warnings;
        bool used = false;
    };
    std::vector<Slot> slots(wavs.size());
    parallel_for(wavs.size(), workers, [&](std::size_t i) {
        const auto& wav = wavs[i];
        auto& slot = slots[i];
        const fs::path txt = fs::path(wav).replace_extension(".txt");
        const std::string stem = wav.stem().string();
        if (!fs::exists(txt)) {
            slot.warnings.push_back(stem + ": no annotation file; skipped");
            return;
        }
        try {
            std::ifstream in(txt);
            std::stringstream buf;
            buf << in.rdbuf();
            const auto rows = parse_annotations(buf.str());
            const auto clip = read_wav(wav);
            slot.cycles = preprocess_recording(clip, rows, metadata_or_opaque(wav.filename().string()), stem, cfg,
                                               &slot.warnings);
            slot.used = true;
        } catch (const DataError& e) {
            slot.warnings.push_back(stem + ": " + e.what() + "; skipped");
        }
    });

    CorpusLoad out;
    for (auto& slot : slots) {
        out.recordings += slot.used ? 1 : 0;
        std::move(slot.cycles.begin(), slot.cycles.end(), std::back_inserter(out.cycles));
        std::move(slot.warnings.begin(), slot.warnings.end(), std::back_inserter(out.warnings));
    }
    return out;
}

}  // namespace auscult
