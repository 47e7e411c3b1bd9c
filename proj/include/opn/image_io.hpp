#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace opn {

// Minimal binary PPM/PGM, enough for filter grids and flow dumps.
struct ImageU8 {
    int width = 0, height = 0, channels = 1;  // 1 (gray) or 3 (rgb), interleaved
    std::vector<uint8_t> pixels;

    uint8_t& at(int y, int x, int c) {
        return pixels[(size_t(y) * width + size_t(x)) * size_t(channels) + size_t(c)];
    }
    uint8_t at(int y, int x, int c) const {
        return pixels[(size_t(y) * width + size_t(x)) * size_t(channels) + size_t(c)];
    }
};

void write_image(const ImageU8& img, const std::string& path);  // P5/P6 by channels
ImageU8 read_image(const std::string& path);

}  // namespace opn
