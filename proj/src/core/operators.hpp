// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rng.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace dcdp {

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 1;
    int size() const { return height * width * channels; }
    bool operator==(const ImageShape&) const = default;
};

// Linear forward map A with exact adjoint. Operators are immutable;
// apply/adjoint are pure and safe to call concurrently.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Vec apply(const Vec& x) const = 0;
    virtual Vec adjoint(const Vec& y) const = 0;
    virtual ImageShape in_shape() const = 0;
    virtual ImageShape out_shape() const = 0;
    virtual std::string name() const = 0;
};

struct Measurement {
    Vec y;
    double sigma_y = 0.0;
    std::string operator_id;
    std::uint64_t seed = 0;
};

std::unique_ptr<LinearOperator> make_identity(ImageShape shape);

// Box mask: apply zeroes the box region. Self-adjoint projector.
std::unique_ptr<LinearOperator> make_inpainting(ImageShape shape, int box_top, int box_left,
                                                int box_h, int box_w);

// Block-average downsampling; adjoint replicates each coarse value into its
// block scaled by 1/factor^2 (so A A^T = (1/factor^2) I on the coarse grid).
std::unique_ptr<LinearOperator> make_downsample(ImageShape shape, int factor);

// Channel-wise 2-D convolution with circular boundary; adjoint is the
// convolution with the 180-degree rotated kernel.
std::unique_ptr<LinearOperator> make_blur(ImageShape shape, const Mat& kernel);

// Normalized kernels (entries sum to 1).
Mat gaussian_kernel(int size, double sigma);
Mat motion_kernel(int size, double length, double angle_radians);

// y = A(x_star) + sigma_y * eps with eps from the seeded stream.
Measurement measure(const LinearOperator& op, const Vec& x_star, double sigma_y, std::uint64_t seed);

// Randomized inner-product test; returns the worst relative defect
// |<Ax,y> - <x,A^T y>| / (|Ax| |y|) over the trials.
double adjoint_check(const LinearOperator& op, int trials, std::uint64_t seed);

// Dense matrix form (column-by-column application); desk-scale only.
Mat materialize(const LinearOperator& op);

// Operator spec strings, e.g.
//   "identity h=32 w=32 c=1"
//   "inpaint h=32 w=32 c=1 top=10 left=10 bh=12 bw=12"
//   "downsample h=32 w=32 c=1 factor=4"
//   "gblur h=32 w=32 c=1 ksize=9 sigma=1.5"
//   "mblur h=32 w=32 c=1 ksize=9 length=7 angle_deg=45"
std::unique_ptr<LinearOperator> parse_operator(const std::string& spec);

} // namespace dcdp
