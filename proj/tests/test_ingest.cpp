#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "auscult/cycle_store.hpp"
#include "auscult/error.hpp"
#include "auscult/ingest.hpp"
#include "auscult/wav.hpp"
#include "test_util.hpp"

using namespace auscult;
namespace fs = std::filesystem;

namespace {

CycleRecord make_cycle(Signal s, int rate = 8000) {
    CycleRecord c;
    c.cycle_id = "t_0";
    c.samples = std::move(s);
    c.sample_rate_hz = rate;
    return c;
}

double snr_db(const Signal& clean, const Signal& noisy) {
    double noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) noise += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
    return 10.0 * std::log10(testutil::energy(clean) / noise);
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("auscult_ingest_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Annotations, ParsesSingleRow) {
    const auto rows = parse_annotations("0.5 2.5 1 0");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].start_s, 0.5);
    EXPECT_DOUBLE_EQ(rows[0].end_s, 2.5);
    EXPECT_TRUE(rows[0].crackle);
    EXPECT_FALSE(rows[0].wheeze);
}

TEST(Annotations, ParsesMultipleRowsInOrder) {
    const auto rows = parse_annotations("0 1 0 0\n1 2 0 1");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_FALSE(rows[0].wheeze);
    EXPECT_TRUE(rows[1].wheeze);
}

TEST(Annotations, SkipsBlankLinesAndTabs) {
    const auto rows = parse_annotations("\n0.1\t0.9\t0\t1\r\n\n");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0].wheeze);
}

TEST(Annotations, RejectsEmptyInterval) { EXPECT_THROW(parse_annotations("0.5 0.5 0 0"), ParseError); }

TEST(Annotations, ErrorNamesLine) {
    try {
        parse_annotations("0 1 0 0\n1 2 0 2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(parse_annotations("0 1 0"), ParseError);
    EXPECT_THROW(parse_annotations("a 1 0 0"), ParseError);
    EXPECT_THROW(parse_annotations("0 1 0 0 0"), ParseError);
}

TEST(FilenameMetadata, FiveTokens) {
    const auto m = parse_filename_metadata("101_1b1_Al_sc_Meditron.wav");
    EXPECT_EQ(m.patient_id, "101");
    EXPECT_EQ(m.recording_id, "1b1");
    EXPECT_EQ(m.chest_location, "Al");
    EXPECT_EQ(m.acquisition_mode, "sc");
    EXPECT_EQ(m.equipment, "Meditron");
    const auto d = parse_filename_metadata("2_2_2_2_2.wav");
    EXPECT_EQ(d.patient_id, "2");
    EXPECT_EQ(d.equipment, "2");
}

TEST(FilenameMetadata, WrongTokenCount) {
    EXPECT_THROW(parse_filename_metadata("x_y_z.wav"), MetadataError);
    const auto m = metadata_or_opaque("x_y_z.wav");
    EXPECT_EQ(m.patient_id, "x_y_z");
}

TEST(Labels, FullFlagTable) {
    using L = std::optional<Label>;
    EXPECT_EQ(map_label(false, false, LabelScheme::General), L(Label::NoCrackle));
    EXPECT_EQ(map_label(false, true, LabelScheme::General), L(Label::NoCrackle));
    EXPECT_EQ(map_label(true, false, LabelScheme::General), L(Label::Crackle));
    EXPECT_EQ(map_label(true, true, LabelScheme::General), L(Label::Crackle));
    EXPECT_EQ(map_label(false, false, LabelScheme::Pure), L(Label::NoCrackle));
    EXPECT_EQ(map_label(false, true, LabelScheme::Pure), std::nullopt);
    EXPECT_EQ(map_label(true, false, LabelScheme::Pure), L(Label::Crackle));
    EXPECT_EQ(map_label(true, true, LabelScheme::Pure), std::nullopt);
}

TEST(SliceCycles, SampleRangesAndSchemes) {
    AudioClip clip{Signal(1000), 100};
    for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] = static_cast<double>(i);
    const std::vector<AnnotationRow> rows{{0.5, 2.5, false, true}, {2.5, 3.0, true, true}, {3.0, 4.004, true, false}};
    const RecordingMetadata meta{"1", "r", "Al", "sc", "E"};
    const auto general = slice_cycles(clip, rows, LabelScheme::General, meta, "stem");
    ASSERT_EQ(general.size(), 3u);
    EXPECT_EQ(general[0].label, Label::NoCrackle);
    EXPECT_EQ(general[1].label, Label::Crackle);
    EXPECT_EQ(general[0].samples.size(), 200u);
    EXPECT_DOUBLE_EQ(general[0].samples.front(), 50.0);
    EXPECT_EQ(general[2].samples.size(), 100u);
    EXPECT_EQ(general[1].cycle_id, "stem_1");
    const auto pure = slice_cycles(clip, rows, LabelScheme::Pure, meta, "stem");
    ASSERT_EQ(pure.size(), 1u);
    EXPECT_EQ(pure[0].cycle_id, "stem_2");
}

TEST(SliceCycles, ClampsPastEndWithWarning) {
    AudioClip clip{Signal(100, 0.1), 100};
    std::vector<std::string> warnings;
    const auto out = slice_cycles(clip, {{0.5, 3.0, false, false}}, LabelScheme::General, {}, "s", &warnings);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].samples.size(), 50u);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(Resample, PreservesDuration) {
    AudioClip clip{testutil::gaussian(44100, 3, 0.1), 44100};
    const auto out = resample(clip, 8000);
    EXPECT_EQ(out.sample_rate_hz, 8000);
    EXPECT_NEAR(static_cast<double>(out.samples.size()), 8000.0, 1.0);
}

TEST(Resample, KeepsToneFrequency) {
    AudioClip clip{testutil::sine(1000.0, 44100.0, 22050), 44100};
    const auto out = resample(clip, 8000);
    EXPECT_NEAR(testutil::dft_peak_hz(out.samples, 8000.0), 1000.0, 2.0);
}

TEST(Resample, RemovesContentAboveNewNyquist) {
    // 5 kHz aliases to 3 kHz at 8 kHz; it must be attenuated by the stopband.
    AudioClip clip{testutil::sine(5000.0, 44100.0, 44100), 44100};
    const auto out = resample(clip, 8000);
    double peak = 0.0;
    for (std::size_t i = 500; i + 500 < out.samples.size(); ++i) peak = std::max(peak, std::abs(out.samples[i]));
    EXPECT_LT(peak, 1e-2);
}

TEST(Resample, IdentityAndStability) {
    AudioClip clip{testutil::gaussian(4000, 9), 8000};
    EXPECT_EQ(resample(clip, 8000).samples, clip.samples);
    AudioClip big{testutil::gaussian(22050, 4), 22050};
    const auto once = resample(big, 8000);
    const auto twice = resample(once, 8000);
    EXPECT_EQ(once.samples, twice.samples);
}

TEST(Resample, RejectsUpsampling) {
    AudioClip clip{Signal(100, 0.0), 4000};
    EXPECT_THROW(resample(clip, 8000), UnsupportedOperation);
}

TEST(ClipToMax, HeadRetainedAndIdempotent) {
    auto c = make_cycle(testutil::gaussian(static_cast<std::size_t>(7.2 * 8000), 1));
    const auto clipped = clip_to_max(c, 5.0);
    EXPECT_EQ(clipped.samples.size(), 40000u);
    EXPECT_TRUE(std::equal(clipped.samples.begin(), clipped.samples.end(), c.samples.begin()));
    EXPECT_EQ(clip_to_max(clipped, 5.0).samples, clipped.samples);
    auto short_cycle = make_cycle(Signal(24000, 0.5));
    EXPECT_EQ(clip_to_max(short_cycle, 5.0).samples.size(), 24000u);
}

TEST(Denoise, ZeroStaysZero) {
    const auto out = denoise(make_cycle(Signal(4000, 0.0)));
    for (double v : out.samples) EXPECT_EQ(v, 0.0);
}

TEST(Denoise, ImprovesSnrOfNoisyTone) {
    const auto clean = testutil::sine(400.0, 8000.0, 16000);
    // Noise std for 5 dB SNR: signal power 0.5.
    const double sd = std::sqrt(0.5 / std::pow(10.0, 0.5));
    auto noise = testutil::gaussian(clean.size(), 17, sd);
    Signal noisy(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) noisy[i] = clean[i] + noise[i];
    const double before = snr_db(clean, noisy);
    EXPECT_NEAR(before, 5.0, 0.2);
    const auto out = denoise(make_cycle(noisy));
    EXPECT_EQ(out.samples.size(), noisy.size());
    EXPECT_GT(snr_db(clean, out.samples), before);
    EXPECT_LE(testutil::energy(out.samples), testutil::energy(noisy));
}

TEST(Denoise, CleanToneBarelyDistorted) {
    const auto clean = testutil::sine(400.0, 8000.0, 16000);
    const auto out = denoise(make_cycle(clean));
    EXPECT_LT(testutil::rel_l2(out.samples, clean), 0.1);
}

TEST(Denoise, OddLengthKeepsLength) {
    const auto x = testutil::gaussian(1237, 5);
    const auto out = denoise(make_cycle(x));
    EXPECT_EQ(out.samples.size(), x.size());
    EXPECT_LE(testutil::energy(out.samples), testutil::energy(x));
}

TEST(Normalize, ScalesToUnitPeak) {
    EXPECT_EQ(normalize_amplitude(make_cycle({0.5, -0.25})).samples, (Signal{1.0, -0.5}));
    EXPECT_EQ(normalize_amplitude(make_cycle({1.0, -1.0})).samples, (Signal{1.0, -1.0}));
    EXPECT_THROW(normalize_amplitude(make_cycle({0.0, 0.0, 0.0})), DegenerateSignalError);
}

TEST(Wav, RoundTrip16Bit) {
    const auto dir = scratch("wav");
    const auto x = testutil::sine(440.0, 22050.0, 2205, 0.5);
    write_wav16(dir / "a.wav", x, 22050);
    const auto clip = read_wav(dir / "a.wav");
    EXPECT_EQ(clip.sample_rate_hz, 22050);
    ASSERT_EQ(clip.samples.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(clip.samples[i], x[i], 1.0 / 32768.0);
}

TEST(Wav, RejectsGarbage) {
    const std::vector<unsigned char> junk{'R', 'I', 'F', 'F', 0, 0, 0, 0, 'X', 'X', 'X', 'X'};
    EXPECT_THROW(decode_wav(junk), DataError);
}

TEST(Pipeline, DeterministicAndBounded) {
    AudioClip clip{testutil::gaussian(22050 * 8, 21, 0.2), 22050};
    const std::vector<AnnotationRow> rows{{0.0, 2.0, true, false}, {2.0, 8.0, false, false}};
    const PreprocessConfig cfg;
    const auto a = preprocess_recording(clip, rows, {}, "r", cfg);
    const auto b = preprocess_recording(clip, rows, {}, "r", cfg);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a[0].samples, b[0].samples);
    EXPECT_EQ(a[1].samples, b[1].samples);
    EXPECT_LE(a[1].duration_s(), 5.0);
    EXPECT_EQ(a[0].sample_rate_hz, 8000);
    double peak = 0.0;
    for (double v : a[0].samples) peak = std::max(peak, std::abs(v));
    EXPECT_DOUBLE_EQ(peak, 1.0);
}

TEST(CorpusLoad, ReadsDirectoryAndRoundTripsStore) {
    const auto dir = scratch("corpus");
    write_wav16(dir / "101_1b1_Al_sc_Meditron.wav", testutil::gaussian(22050 * 3, 2, 0.2), 22050);
    std::ofstream(dir / "101_1b1_Al_sc_Meditron.txt") << "0.1 1.2 1 0\n1.2 2.9 0 1\n";
    write_wav16(dir / "orphan.wav", testutil::gaussian(1000, 2, 0.2), 22050);
    std::ofstream(dir / "bad_1_Al_sc_X.txt") << "oops\n";
    write_wav16(dir / "bad_1_Al_sc_X.wav", testutil::gaussian(22050, 2, 0.2), 22050);

    PreprocessConfig cfg;
    const auto load = load_corpus(dir, cfg, 2);
    ASSERT_EQ(load.cycles.size(), 2u);
    EXPECT_EQ(load.cycles[0].meta.patient_id, "101");
    EXPECT_FALSE(load.warnings.empty());

    const auto store = dir / "store";
    write_cycle_store(store, load.cycles);
    const auto back = read_cycle_store(store);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].cycle_id, load.cycles[1].cycle_id);
    EXPECT_EQ(back[1].label, load.cycles[1].label);
    EXPECT_EQ(back[1].meta.equipment, "Meditron");
    ASSERT_EQ(back[0].samples.size(), load.cycles[0].samples.size());
    for (std::size_t i = 0; i < back[0].samples.size(); ++i) {
        EXPECT_FLOAT_EQ(static_cast<float>(back[0].samples[i]), static_cast<float>(load.cycles[0].samples[i]));
    }
}
