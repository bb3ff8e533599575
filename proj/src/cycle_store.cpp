#include "auscult/cycle_store.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "auscult/error.hpp"

namespace auscult {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'L', 'S', 'C', '1'};
constexpr const char* kHeader =
    "cycle_id,patient_id,recording_id,chest_location,acquisition_mode,equipment,label,duration_s,n_samples,file";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_lsc1(const fs::path& path, std::span<const double> samples, int sample_rate_hz) {
    static_assert(std::endian::native == std::endian::little);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(kMagic, 4);
    const auto rate = static_cast<std::int32_t>(sample_rate_hz);
    out.write(reinterpret_cast<const char*>(&rate), sizeof rate);
    std::vector<float> f(samples.begin(), samples.end());
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
}

AudioClip read_lsc1(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    std::int32_t rate = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&rate), sizeof rate);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": not an LSC1 file");
    if (rate <= 0) throw DataError(path.string() + ": invalid sample rate");
    std::vector<char> body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (body.size() % sizeof(float) != 0) throw DataError(path.string() + ": truncated sample data");
    std::vector<float> f(body.size() / sizeof(float));
    std::memcpy(f.data(), body.data(), body.size());
    return AudioClip{Signal(f.begin(), f.end()), rate};
}

void write_cycle_store(const fs::path& dir, const std::vector<CycleRecord>& cycles) {
    std::error_code ec;
    fs::create_directories(dir / "cycles", ec);
    if (ec) throw ConfigError("cannot create " + (dir / "cycles").string() + ": " + ec.message());
    std::ofstream manifest(dir / kManifestName);
    if (!manifest) throw ConfigError("cannot write " + (dir / kManifestName).string());
    manifest << kHeader << '\n';
    for (const auto& c : cycles) {
        const std::string file = "cycles/" + c.cycle_id + ".lsc";
        write_lsc1(dir / file, c.samples, c.sample_rate_hz);
        manifest << c.cycle_id << ',' << c.meta.patient_id << ',' << c.meta.recording_id << ','
                 << c.meta.chest_location << ',' << c.meta.acquisition_mode << ',' << c.meta.equipment << ','
                 << to_string(c.label) << ',' << std::fixed << std::setprecision(6) << c.duration_s() << ','
                 << c.samples.size() << ',' << file << '\n';
    }
}

std::vector<CycleRecord> read_cycle_store(const fs::path& dir) {
    std::ifstream manifest(dir / kManifestName);
    if (!manifest) throw DataError("no cycle store at '" + dir.string() + "' (run `ingest` first)");
    std::string line;
    std::getline(manifest, line);
    if (line != kHeader) throw DataError((dir / kManifestName).string() + ": unexpected header");
    std::vector<CycleRecord> out;
    int line_no = 1;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 10) throw ParseError("manifest row has " + std::to_string(cells.size()) + " cells", line_no);
        CycleRecord c;
        c.cycle_id = cells[0];
        c.meta = {cells[1], cells[2], cells[3], cells[4], cells[5]};
        c.label = parse_label(cells[6]);
        auto clip = read_lsc1(dir / cells[9]);
        c.samples = std::move(clip.samples);
        c.sample_rate_hz = clip.sample_rate_hz;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace auscult
