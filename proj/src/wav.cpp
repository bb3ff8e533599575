#include "auscult/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "auscult/error.hpp"

namespace auscult {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

double decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
    if (format == kFormatFloat) {
        float f;
        std::uint32_t raw = u32(p);
        std::memcpy(&f, &raw, sizeof f);
        return static_cast<double>(f);
    }
    switch (bits) {
        case 8:
            return (static_cast<double>(p[0]) - 128.0) / 128.0;
        case 16:
            return static_cast<double>(static_cast<std::int16_t>(u16(p))) / 32768.0;
        case 24: {
            std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
            if (v & 0x800000) v -= 0x1000000;
            return static_cast<double>(v) / 8388608.0;
        }
        case 32:
            return static_cast<double>(static_cast<std::int32_t>(u32(p))) / 2147483648.0;
        default:
            throw DataError("unsupported PCM bit depth " + std::to_string(bits));
    }
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

AudioClip decode_wav(std::span<const unsigned char> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw DataError("not a RIFF/WAVE file");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::size_t len = u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min(len, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw DataError("truncated fmt chunk");
            format = u16(chunk + 8);
            channels = u16(chunk + 10);
            rate = u32(chunk + 12);
            bits = u16(chunk + 22);
            if (format == kFormatExtensible && avail >= 26) format = u16(chunk + 8 + 24);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_len = avail;
        }
        pos = body + len + (len % 2);
    }
    if (format == 0) throw DataError("missing fmt chunk");
    if (data == nullptr) throw DataError("missing data chunk");
    if (format != kFormatPcm && format != kFormatFloat) {
        throw DataError("unsupported WAV format tag " + std::to_string(format));
    }
    if (format == kFormatFloat && bits != 32) throw DataError("only 32-bit float WAV is supported");
    if (channels == 0 || rate == 0) throw DataError("invalid channel count or sample rate");

    const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
    const std::size_t frames = data_len / frame_bytes;
    if (frames == 0) throw DataError("WAV file has no samples");

    AudioClip clip;
    clip.sample_rate_hz = static_cast<int>(rate);
    clip.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            acc += decode_sample(data + f * frame_bytes + c * (bits / 8), format, bits);
        }
        const double v = acc / channels;
        if (!std::isfinite(v)) throw DataError("non-finite sample in WAV data");
        clip.samples[f] = v;
    }
    return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const DataError& e) {
        throw DataError(path.filename().string() + ": " + e.what());
    }
}

void write_wav16(const std::filesystem::path& path, std::span<const double> samples, int sample_rate_hz) {
    std::string out;
    const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
    out.append("RIFF");
    put_u32(out, 36 + data_len);
    out.append("WAVEfmt ");
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(sample_rate_hz));
    put_u32(out, static_cast<std::uint32_t>(sample_rate_hz) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.append("data");
    put_u32(out, data_len);
    for (double s : samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace auscult
