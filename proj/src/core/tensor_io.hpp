// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "operators.hpp"

#include <string>

namespace dcdp {

// Flat text tensor: a 3-line header (height, width, channels) followed by one
// value per line in channel-major order. Round-trips exactly (17 significant
// digits).
void write_tensor(const std::string& path, const Vec& data, ImageShape shape);
Vec read_tensor(const std::string& path, ImageShape* shape_out = nullptr);

// 8-bit binary PGM (1 channel) / PPM (3 channels); values clamped to
// [0, peak] and quantized.
void write_image(const std::string& path, const Vec& data, ImageShape shape, double peak = 1.0);
Vec read_image(const std::string& path, ImageShape* shape_out = nullptr, double peak = 1.0);

} // namespace dcdp
