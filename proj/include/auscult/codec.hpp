#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace auscult {

/// Base-64 of the little-endian IEEE-754 bytes of `values`.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view b64);

/// Lower-case hex SHA-256, used for stage content stamps.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::string_view bytes);
    Sha256& update_file(const std::string& path);
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace auscult
