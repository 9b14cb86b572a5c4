// SPDX-License-Identifier: Apache-2.0
#include "operators.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dcdp {

namespace {

class IdentityOp final : public LinearOperator {
public:
    explicit IdentityOp(ImageShape s) : shape_(s) {}
    Vec apply(const Vec& x) const override { return x; }
    Vec adjoint(const Vec& y) const override { return y; }
    ImageShape in_shape() const override { return shape_; }
    ImageShape out_shape() const override { return shape_; }
    std::string name() const override { return "identity"; }

private:
    ImageShape shape_;
};

class InpaintingOp final : public LinearOperator {
public:
    InpaintingOp(ImageShape s, int top, int left, int bh, int bw)
        : shape_(s), top_(top), left_(left), bh_(bh), bw_(bw) {}

    Vec apply(const Vec& x) const override {
        if (x.size() != shape_.size()) throw std::invalid_argument("inpaint: shape mismatch");
        Vec y = x;
        for (int c = 0; c < shape_.channels; ++c)
            for (int i = top_; i < top_ + bh_; ++i)
                for (int j = left_; j < left_ + bw_; ++j)
                    y[(c * shape_.height + i) * shape_.width + j] = 0.0;
        return y;
    }
    Vec adjoint(const Vec& y) const override { return apply(y); } // diagonal 0/1 mask
    ImageShape in_shape() const override { return shape_; }
    ImageShape out_shape() const override { return shape_; }
    std::string name() const override { return "inpaint"; }

private:
    ImageShape shape_;
    int top_, left_, bh_, bw_;
};

class DownsampleOp final : public LinearOperator {
public:
    DownsampleOp(ImageShape s, int factor) : in_(s), factor_(factor) {
        out_ = ImageShape{s.height / factor, s.width / factor, s.channels};
    }

    Vec apply(const Vec& x) const override {
        if (x.size() != in_.size()) throw std::invalid_argument("downsample: shape mismatch");
        Vec y = Vec::Zero(out_.size());
        const double inv = 1.0 / double(factor_ * factor_);
        // pairwise block reduction: summing 2^k equal values is then exact,
        // which makes A A^T = (1/factor^2) I hold bit-for-bit for
        // power-of-two factors
        std::vector<double> block(std::size_t(factor_) * factor_);
        for (int c = 0; c < in_.channels; ++c)
            for (int i = 0; i < out_.height; ++i)
                for (int j = 0; j < out_.width; ++j) {
                    std::size_t n = 0;
                    for (int di = 0; di < factor_; ++di)
                        for (int dj = 0; dj < factor_; ++dj)
                            block[n++] =
                                x[(c * in_.height + i * factor_ + di) * in_.width + j * factor_ + dj];
                    while (n > 1) {
                        std::size_t half = n / 2;
                        for (std::size_t k = 0; k < half; ++k) block[k] = block[2 * k] + block[2 * k + 1];
                        if (n % 2 == 1) block[half++] = block[n - 1];
                        n = half;
                    }
                    y[(c * out_.height + i) * out_.width + j] = block[0] * inv;
                }
        return y;
    }

    Vec adjoint(const Vec& y) const override {
        if (y.size() != out_.size()) throw std::invalid_argument("downsample: shape mismatch");
        Vec x = Vec::Zero(in_.size());
        const double inv = 1.0 / double(factor_ * factor_);
        for (int c = 0; c < in_.channels; ++c)
            for (int i = 0; i < out_.height; ++i)
                for (int j = 0; j < out_.width; ++j) {
                    double v = y[(c * out_.height + i) * out_.width + j] * inv;
                    for (int di = 0; di < factor_; ++di)
                        for (int dj = 0; dj < factor_; ++dj)
                            x[(c * in_.height + i * factor_ + di) * in_.width + j * factor_ + dj] = v;
                }
        return x;
    }

    ImageShape in_shape() const override { return in_; }
    ImageShape out_shape() const override { return out_; }
    std::string name() const override { return "downsample"; }

private:
    ImageShape in_, out_;
    int factor_;
};

class BlurOp final : public LinearOperator {
public:
    BlurOp(ImageShape s, Mat kernel) : shape_(s), kernel_(std::move(kernel)) {
        flipped_ = kernel_.reverse();
        // wrapped source indices, precomputed once per axis
        const int kh = int(kernel_.rows()), kw = int(kernel_.cols());
        row_idx_.resize(std::size_t(s.height) * kh);
        col_idx_.resize(std::size_t(s.width) * kw);
        for (int i = 0; i < s.height; ++i)
            for (int a = 0; a < kh; ++a) {
                int ii = i - (a - kh / 2);
                row_idx_[std::size_t(i) * kh + a] = (ii % s.height + s.height) % s.height;
            }
        for (int j = 0; j < s.width; ++j)
            for (int b = 0; b < kw; ++b) {
                int jj = j - (b - kw / 2);
                col_idx_[std::size_t(j) * kw + b] = (jj % s.width + s.width) % s.width;
            }
    }

    Vec apply(const Vec& x) const override { return convolve(x, kernel_); }
    Vec adjoint(const Vec& y) const override { return convolve(y, flipped_); }
    ImageShape in_shape() const override { return shape_; }
    ImageShape out_shape() const override { return shape_; }
    std::string name() const override { return "blur"; }

private:
    Vec convolve(const Vec& x, const Mat& k) const {
        if (x.size() != shape_.size()) throw std::invalid_argument("blur: shape mismatch");
        const int kh = int(k.rows()), kw = int(k.cols());
        const int h = shape_.height, w = shape_.width;
        Vec y = Vec::Zero(shape_.size());
        for (int c = 0; c < shape_.channels; ++c) {
            const int base = c * h * w;
            for (int i = 0; i < h; ++i) {
                const int* rows = &row_idx_[std::size_t(i) * kh];
                for (int j = 0; j < w; ++j) {
                    const int* cols = &col_idx_[std::size_t(j) * kw];
                    double acc = 0.0;
                    for (int a = 0; a < kh; ++a) {
                        const double* src = x.data() + base + rows[a] * w;
                        for (int b = 0; b < kw; ++b) acc += k(a, b) * src[cols[b]];
                    }
                    y[base + i * w + j] = acc;
                }
            }
        }
        return y;
    }

    ImageShape shape_;
    Mat kernel_, flipped_;
    std::vector<int> row_idx_, col_idx_;
};

void require_positive_shape(ImageShape s) {
    if (s.height < 1 || s.width < 1 || s.channels < 1)
        throw std::invalid_argument("ImageShape: dimensions must be positive");
}

} // namespace

std::unique_ptr<LinearOperator> make_identity(ImageShape shape) {
    require_positive_shape(shape);
    return std::make_unique<IdentityOp>(shape);
}

std::unique_ptr<LinearOperator> make_inpainting(ImageShape shape, int box_top, int box_left,
                                                int box_h, int box_w) {
    require_positive_shape(shape);
    if (box_top < 0 || box_left < 0 || box_h < 0 || box_w < 0 ||
        box_top + box_h > shape.height || box_left + box_w > shape.width)
        throw std::invalid_argument("make_inpainting: box out of bounds");
    return std::make_unique<InpaintingOp>(shape, box_top, box_left, box_h, box_w);
}

std::unique_ptr<LinearOperator> make_downsample(ImageShape shape, int factor) {
    require_positive_shape(shape);
    if (factor < 1) throw std::invalid_argument("make_downsample: factor must be positive");
    if (shape.height % factor != 0 || shape.width % factor != 0)
        throw std::invalid_argument("make_downsample: factor must divide height and width");
    return std::make_unique<DownsampleOp>(shape, factor);
}

std::unique_ptr<LinearOperator> make_blur(ImageShape shape, const Mat& kernel) {
    require_positive_shape(shape);
    if (kernel.rows() > shape.height || kernel.cols() > shape.width)
        throw std::invalid_argument("make_blur: kernel larger than image");
    return std::make_unique<BlurOp>(shape, kernel);
}

Mat gaussian_kernel(int size, double sigma) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    Mat k(size, size);
    const int c = size / 2;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            double di = i - c, dj = j - c;
            k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        }
    return k / k.sum();
}

Mat motion_kernel(int size, double length, double angle_radians) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("motion_kernel: size must be odd");
    if (!(length > 0.0)) throw std::invalid_argument("motion_kernel: length must be positive");
    // Anti-aliased line segment through the center: intensity falls off
    // linearly with distance to the segment inside a one-pixel band.
    Mat k = Mat::Zero(size, size);
    const double c = size / 2;
    const double ux = std::cos(angle_radians), uy = std::sin(angle_radians);
    const double half = length / 2.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            double px = j - c, py = i - c;
            double proj = std::clamp(px * ux + py * uy, -half, half);
            double dx = px - proj * ux, dy = py - proj * uy;
            double dist = std::hypot(dx, dy);
            k(i, j) = std::max(0.0, 1.0 - dist);
        }
    double s = k.sum();
    if (s <= 0.0) throw std::runtime_error("motion_kernel: degenerate kernel");
    return k / s;
}

Measurement measure(const LinearOperator& op, const Vec& x_star, double sigma_y, std::uint64_t seed) {
    if (x_star.size() != op.in_shape().size())
        throw std::invalid_argument("measure: x_star does not match operator input shape");
    if (sigma_y < 0.0) throw std::invalid_argument("measure: sigma_y must be nonnegative");
    Measurement m;
    m.y = op.apply(x_star);
    if (sigma_y > 0.0) {
        Rng rng(seed);
        m.y += sigma_y * rng.normal_vec(m.y.size());
    }
    m.sigma_y = sigma_y;
    m.operator_id = op.name();
    m.seed = seed;
    return m;
}

double adjoint_check(const LinearOperator& op, int trials, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Vec x = rng.normal_vec(op.in_shape().size());
        Vec y = rng.normal_vec(op.out_shape().size());
        Vec ax = op.apply(x);
        double lhs = ax.dot(y);
        double rhs = x.dot(op.adjoint(y));
        double scale = ax.norm() * y.norm();
        double rel = scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
        worst = std::max(worst, rel);
    }
    return worst;
}

Mat materialize(const LinearOperator& op) {
    const int n = op.in_shape().size();
    const int m = op.out_shape().size();
    Mat a(m, n);
    Vec e = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        a.col(j) = op.apply(e);
        e[j] = 0.0;
    }
    return a;
}

std::unique_ptr<LinearOperator> parse_operator(const std::string& spec) {
    std::istringstream in(spec);
    std::string kind;
    if (!(in >> kind)) throw std::invalid_argument("parse_operator: empty spec");
    std::map<std::string, double> kv;
    std::string tok;
    while (in >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("parse_operator: expected key=value, got '" + tok + "'");
        try {
            kv[tok.substr(0, eq)] = std::stod(tok.substr(eq + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("parse_operator: bad numeric value in '" + tok + "'");
        }
    }
    auto get = [&](const std::string& key, double fallback = std::nan(""), bool required = true) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (required && std::isnan(fallback))
                throw std::invalid_argument("parse_operator: missing key '" + key + "' for " + kind);
            return fallback;
        }
        return it->second;
    };
    ImageShape shape{int(get("h")), int(get("w")), int(get("c", 1, false))};
    if (kind == "identity") return make_identity(shape);
    if (kind == "inpaint")
        return make_inpainting(shape, int(get("top")), int(get("left")), int(get("bh")), int(get("bw")));
    if (kind == "downsample") return make_downsample(shape, int(get("factor")));
    if (kind == "gblur")
        return make_blur(shape, gaussian_kernel(int(get("ksize")), get("sigma")));
    if (kind == "mblur") {
        double angle = get("angle_deg") * 3.14159265358979323846 / 180.0;
        return make_blur(shape, motion_kernel(int(get("ksize")), get("length"), angle));
    }
    throw std::invalid_argument("parse_operator: unknown operator kind '" + kind + "'");
}

} // namespace dcdp
