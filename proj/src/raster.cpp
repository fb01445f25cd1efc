#include <fstream>

#include "panet/data/dataset.hpp"

namespace panet {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = is.peek()) != EOF && !isspace(c)) tok.push_back(static_cast<char>(is.get()));
            return tok;
        }
    }
    return tok;
}

}  // namespace

U8Tensor read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open raster file '" + path + "'");
    if (next_token(is) != "P5") throw DataError("'" + path + "' is not a binary (P5) PGM file");
    const int64_t w = std::stoll(next_token(is));
    const int64_t h = std::stoll(next_token(is));
    const int64_t maxval = std::stoll(next_token(is));
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw DataError("'" + path + "' has unsupported PGM geometry (8-bit only)");
    is.get();  // single whitespace after maxval
    U8Tensor img({h, w});
    is.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.numel()));
    if (!is) throw DataError("'" + path + "' is truncated");
    return img;
}

void write_pgm(const std::string& path, const U8Tensor& img) {
    require(img.rank() == 2, "write_pgm: expected [H,W] image");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << "P5\n" << img.size(1) << " " << img.size(0) << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.numel()));
    if (!os) throw DataError("failed writing '" + path + "'");
}

void write_ppm(const std::string& path, const U8Tensor& rgb) {
    require(rgb.rank() == 3 && rgb.size(0) == 3, "write_ppm: expected [3,H,W] image");
    const int64_t h = rgb.size(1), w = rgb.size(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(3 * w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) row[static_cast<size_t>(3 * x + c)] = rgb[(c * h + y) * w + x];
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw DataError("failed writing '" + path + "'");
}

}  // namespace panet
