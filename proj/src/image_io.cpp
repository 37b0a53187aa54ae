#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phenoseq/data.hpp"

namespace phenoseq {

namespace {

// Skips whitespace and '#' comments between header tokens.
std::size_t skip_separators(const std::string& bytes, std::size_t pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    return pos;
}

std::size_t read_header_int(const std::string& bytes, std::size_t& pos, const std::string& source) {
    pos = skip_separators(bytes, pos);
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
        ++pos;
        ++digits;
    }
    if (digits == 0) throw ValidationError(source + ": malformed PPM header");
    return value;
}

}  // namespace

Tensor decode_ppm(const std::string& bytes, const std::string& source) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw ValidationError(source + ": not a binary PPM (P6) file");
    }
    std::size_t pos = 2;
    const std::size_t width = read_header_int(bytes, pos, source);
    const std::size_t height = read_header_int(bytes, pos, source);
    const std::size_t maxval = read_header_int(bytes, pos, source);
    if (width == 0 || height == 0) throw ValidationError(source + ": PPM has zero extent");
    if (maxval == 0 || maxval > 255) throw ValidationError(source + ": only 8-bit PPM is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw ValidationError(source + ": malformed PPM header");
    }
    ++pos;
    const std::size_t pixels = width * height;
    if (bytes.size() - pos < pixels * 3) throw ValidationError(source + ": truncated PPM pixel data");
    Tensor image({3, height, width});
    const double scale = 1.0 / static_cast<double>(maxval);
    for (std::size_t i = 0; i < pixels; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            image[c * pixels + i] = static_cast<unsigned char>(bytes[pos + 3 * i + c]) * scale;
        }
    }
    return image;
}

std::string encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("encode_ppm: expected [3 x h x w], got " + shape_to_string(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2), pixels = h * w;
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + pixels * 3);
    for (std::size_t i = 0; i < pixels; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::clamp(image[c * pixels + i], 0.0, 1.0);
            out[header + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
        }
    }
    return out;
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open image " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return decode_ppm(buffer.str(), path.string());
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image " + path.string());
    const std::string bytes = encode_ppm(image);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace phenoseq
