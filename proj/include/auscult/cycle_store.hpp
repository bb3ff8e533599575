#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "auscult/ingest.hpp"

namespace auscult {

/// LSC1 sample file: "LSC1", little-endian int32 sample rate, then
/// little-endian float32 samples to end of file.
void write_lsc1(const std::filesystem::path& path, std::span<const double> samples, int sample_rate_hz);
AudioClip read_lsc1(const std::filesystem::path& path);

/// A cycle store directory holds `manifest.csv` plus `cycles/<cycle_id>.lsc`.
/// Samples round-trip through float32.
void write_cycle_store(const std::filesystem::path& dir, const std::vector<CycleRecord>& cycles);
std::vector<CycleRecord> read_cycle_store(const std::filesystem::path& dir);

inline constexpr const char* kManifestName = "manifest.csv";

}  // namespace auscult
