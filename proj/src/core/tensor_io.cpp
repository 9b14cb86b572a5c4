// SPDX-License-Identifier: Apache-2.0
#include "tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dcdp {

void write_tensor(const std::string& path, const Vec& data, ImageShape shape) {
    if (data.size() != shape.size()) throw std::invalid_argument("write_tensor: shape mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_tensor: cannot open " + path);
    out.precision(17);
    out << shape.height << "\n" << shape.width << "\n" << shape.channels << "\n";
    for (Eigen::Index i = 0; i < data.size(); ++i) out << data[i] << "\n";
    if (!out) throw std::runtime_error("write_tensor: write failed for " + path);
}

Vec read_tensor(const std::string& path, ImageShape* shape_out) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_tensor: cannot open " + path);
    ImageShape shape;
    if (!(in >> shape.height >> shape.width >> shape.channels) || shape.size() <= 0)
        throw std::runtime_error("read_tensor: bad header in " + path);
    Vec data(shape.size());
    for (int i = 0; i < shape.size(); ++i)
        if (!(in >> data[i]))
            throw std::runtime_error("read_tensor: truncated data in " + path);
    if (shape_out) *shape_out = shape;
    return data;
}

void write_image(const std::string& path, const Vec& data, ImageShape shape, double peak) {
    if (data.size() != shape.size()) throw std::invalid_argument("write_image: shape mismatch");
    if (shape.channels != 1 && shape.channels != 3)
        throw std::invalid_argument("write_image: only 1 or 3 channels supported");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_image: cannot open " + path);
    out << (shape.channels == 1 ? "P5" : "P6") << "\n"
        << shape.width << " " << shape.height << "\n255\n";
    const int plane = shape.height * shape.width;
    for (int i = 0; i < plane; ++i)
        for (int c = 0; c < shape.channels; ++c) {
            double v = std::clamp(data[c * plane + i] / peak, 0.0, 1.0);
            out.put(char(int(std::lround(v * 255.0))));
        }
    if (!out) throw std::runtime_error("write_image: write failed for " + path);
}

Vec read_image(const std::string& path, ImageShape* shape_out, double peak) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_image: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if ((magic != "P5" && magic != "P6") || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("read_image: unsupported format in " + path);
    in.get(); // single whitespace after header
    ImageShape shape{h, w, magic == "P5" ? 1 : 3};
    const int plane = h * w;
    Vec data(shape.size());
    for (int i = 0; i < plane; ++i)
        for (int c = 0; c < shape.channels; ++c) {
            int byte = in.get();
            if (byte < 0) throw std::runtime_error("read_image: truncated data in " + path);
            data[c * plane + i] = peak * double(byte) / 255.0;
        }
    if (shape_out) *shape_out = shape;
    return data;
}

} // namespace dcdp
