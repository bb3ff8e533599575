#pragma once

#include <filesystem>
#include <span>

#include "auscult/ingest.hpp"

namespace auscult {

/// Decodes a RIFF/WAVE file: PCM 8/16/24/32-bit integer or 32-bit IEEE float.
/// Multi-channel audio is averaged to mono. Samples land in [-1, 1].
AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const unsigned char> bytes);

/// Writes mono 16-bit PCM; samples are clamped to [-1, 1].
void write_wav16(const std::filesystem::path& path, std::span<const double> samples, int sample_rate_hz);

}  // namespace auscult
