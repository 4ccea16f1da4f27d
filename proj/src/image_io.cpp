#include "t2v/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace t2v {

std::vector<std::string> export_frames(const VideoClip& clip, const std::string& dir,
                                       const std::string& format) {
    if (format != "ppm") throw std::invalid_argument("export_frames: unsupported format " + format);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("export_frames: cannot create " + dir + ": " + ec.message());

    size_t F = clip.frames(), H = clip.height(), W = clip.width();
    const auto& px = clip.pixels.values();
    std::vector<std::string> paths;
    for (size_t f = 0; f < F; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu.ppm", f);
        std::string path = dir + "/" + name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("export_frames: cannot write " + path);
        out << "P6\n" << W << " " << H << "\n255\n";
        std::vector<unsigned char> row(W * 3);
        for (size_t y = 0; y < H; ++y) {
            for (size_t x = 0; x < W * 3; ++x) {
                float v = px[(f * H + y) * W * 3 + x];
                v = std::min(1.0f, std::max(0.0f, v));
                row[x] = (unsigned char)std::floor(v * 255.0f + 0.5f);  // round half up
            }
            out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
        }
        if (!out) throw std::runtime_error("export_frames: write failed for " + path);
        paths.push_back(path);
    }
    return paths;
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255) throw std::runtime_error("read_ppm: unsupported PPM " + path);
    in.get();  // single whitespace after the header
    std::vector<unsigned char> bytes(w * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated file " + path);
    std::vector<float> data(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) data[i] = float(bytes[i]) / 255.0f;
    return Tensor::from_data({h, w, 3}, std::move(data));
}

}  // namespace t2v
