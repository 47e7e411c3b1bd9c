#include "opn/image_io.hpp"

#include <fstream>
#include <sstream>

#include "opn/errors.hpp"

namespace opn {

void write_image(const ImageU8& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) throw ShapeError("write_image: 1 or 3 channels");
    if (img.pixels.size() != size_t(img.width) * img.height * img.channels)
        throw ShapeError("write_image: pixel buffer size mismatch");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (!f) throw IoError("write failed: " + path);
}

ImageU8 read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string magic;
    f >> magic;
    ImageU8 img;
    if (magic == "P6") img.channels = 3;
    else if (magic == "P5") img.channels = 1;
    else throw FormatError("not a binary PPM/PGM: " + path);
    int maxval = 0;
    f >> img.width >> img.height >> maxval;
    if (!f || img.width <= 0 || img.height <= 0 || maxval != 255)
        throw FormatError("bad PNM header: " + path);
    f.get();  // single whitespace after header
    img.pixels.resize(size_t(img.width) * img.height * img.channels);
    f.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
    if (size_t(f.gcount()) != img.pixels.size()) throw FormatError("short PNM payload: " + path);
    return img;
}

}  // namespace opn
