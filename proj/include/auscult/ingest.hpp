#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "auscult/types.hpp"

namespace auscult {

struct AudioClip {
    Signal samples;
    int sample_rate_hz = 0;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// One line of an ICBHI-style annotation file.
struct AnnotationRow {
    double start_s = 0.0;
    double end_s = 0.0;
    bool crackle = false;
    bool wheeze = false;
};

/// Positional tokens of `<patient>_<recording>_<location>_<mode>_<equipment>.wav`.
struct RecordingMetadata {
    std::string patient_id;
    std::string recording_id;
    std::string chest_location;
    std::string acquisition_mode;
    std::string equipment;
};

struct CycleRecord {
    std::string cycle_id;
    RecordingMetadata meta;
    Signal samples;
    int sample_rate_hz = 0;
    Label label = Label::NoCrackle;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// General folds wheeze into no-crackle and both into crackle; Pure keeps
/// only the none and crackle-only cycles.
enum class LabelScheme { General, Pure };

LabelScheme parse_scheme(std::string_view s);
std::string_view to_string(LabelScheme s);

/// Label for an annotation's flags under `scheme`; nullopt when the scheme
/// excludes the cycle.
std::optional<Label> map_label(bool crackle, bool wheeze, LabelScheme scheme);

/// Throws ParseError naming the offending line.
std::vector<AnnotationRow> parse_annotations(std::string_view text);

/// Accepts a bare file name or a path; the extension is ignored. Throws
/// MetadataError unless the stem has exactly five underscore-separated tokens.
RecordingMetadata parse_filename_metadata(std::string_view name);

/// Same as parse_filename_metadata, but an unconventional name becomes an
/// opaque patient/recording id with "unknown" for the remaining fields.
RecordingMetadata metadata_or_opaque(std::string_view name);

/// Cuts `clip` at each retained row's [round(start*rate), round(end*rate)).
/// Rows running past the clip end are clamped; a note is appended to
/// `warnings` when it is non-null. Cycle ids are `<stem>_<row index>`.
std::vector<CycleRecord> slice_cycles(const AudioClip& clip, const std::vector<AnnotationRow>& rows,
                                      LabelScheme scheme, const RecordingMetadata& meta,
                                      std::string_view stem, std::vector<std::string>* warnings = nullptr);

/// Kaiser-windowed sinc polyphase resampler (60 dB stopband, transition band
/// ending at the new Nyquist). Downsampling only; equal rates return a copy.
AudioClip resample(const AudioClip& clip, int target_rate_hz = 8000);

/// Keeps the head of cycles longer than `max_s`; shorter cycles pass unpadded.
CycleRecord clip_to_max(CycleRecord cycle, double max_s = 5.0);

/// db8 wavelet shrinkage: 5 levels, hard threshold sigma*sqrt(2 ln N) on every
/// detail level with sigma = median(|d1|)/0.6745.
CycleRecord denoise(CycleRecord cycle);

/// Scales so that max |sample| = 1. Throws DegenerateSignalError on silence.
CycleRecord normalize_amplitude(CycleRecord cycle);

struct PreprocessConfig {
    LabelScheme scheme = LabelScheme::General;
    int target_rate_hz = 8000;
    double max_seconds = 5.0;
    bool denoise = true;
};

/// resample -> slice -> clip -> denoise -> normalize for one recording.
/// Cycles that fail normalization (silent) are skipped with a warning.
std::vector<CycleRecord> preprocess_recording(const AudioClip& clip, const std::vector<AnnotationRow>& rows,
                                              const RecordingMetadata& meta, std::string_view stem,
                                              const PreprocessConfig& cfg,
                                              std::vector<std::string>* warnings = nullptr);

struct CorpusLoad {
    std::vector<CycleRecord> cycles;
    std::vector<std::string> warnings;
    std::size_t recordings = 0;
};

/// Loads every `<stem>.wav` with a same-stem `.txt` in `data_dir`, ordered by
/// file name. Recordings are processed on up to `workers` threads.
CorpusLoad load_corpus(const std::filesystem::path& data_dir, const PreprocessConfig& cfg, int workers = 1);

}  // namespace auscult
