// SPDX-License-Identifier: Apache-2.0
#include "latent.hpp"

#include "tensor_io.hpp"

#include <stdexcept>

namespace dcdp {

LinearCodec LinearCodec::orthonormal(Mat decode) {
    if (decode.cols() < 1 || decode.rows() < decode.cols())
        throw std::invalid_argument("LinearCodec: need n x r decode matrix with r <= n");
    Mat gram = decode.transpose() * decode;
    double defect = (gram - Mat::Identity(decode.cols(), decode.cols())).cwiseAbs().maxCoeff();
    if (defect > 1e-10)
        throw std::invalid_argument("LinearCodec: decode columns are not orthonormal");
    Mat encode = decode.transpose();
    return LinearCodec(std::move(decode), std::move(encode), true);
}

LinearCodec LinearCodec::raw(Mat decode, Mat encode) {
    if (encode.rows() != decode.cols() || encode.cols() != decode.rows())
        throw std::invalid_argument("LinearCodec: encode must be r x n for an n x r decode");
    return LinearCodec(std::move(decode), std::move(encode), false);
}

LinearCodec LinearCodec::pca(const std::vector<Vec>& dataset, int latent_dim) {
    if (dataset.empty()) throw std::invalid_argument("LinearCodec::pca: empty dataset");
    const int n = int(dataset[0].size());
    if (latent_dim < 1 || latent_dim > n || std::size_t(latent_dim) > dataset.size())
        throw std::invalid_argument("LinearCodec::pca: latent_dim outside 1..min(n, #samples)");

    Mat scatter = Mat::Zero(n, n);
    for (const Vec& x : dataset) {
        if (x.size() != n) throw std::invalid_argument("LinearCodec::pca: inconsistent dimensions");
        scatter.noalias() += x * x.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(scatter);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("LinearCodec::pca: eigendecomposition failed");

    // eigenvalues ascending; take the top latent_dim
    double top = eig.eigenvalues()[n - 1];
    double cutoff = eig.eigenvalues()[n - latent_dim];
    if (!(cutoff > 1e-12 * std::max(1.0, top)))
        throw std::invalid_argument("LinearCodec::pca: dataset rank below requested latent_dim");

    Mat decode(n, latent_dim);
    for (int j = 0; j < latent_dim; ++j) decode.col(j) = eig.eigenvectors().col(n - 1 - j);
    return orthonormal(std::move(decode));
}

Vec LinearCodec::decode(const Vec& z) const {
    if (z.size() != latent_dim()) throw std::invalid_argument("LinearCodec::decode: dimension mismatch");
    return decode_ * z;
}

Vec LinearCodec::encode(const Vec& x) const {
    if (x.size() != pixel_dim()) throw std::invalid_argument("LinearCodec::encode: dimension mismatch");
    return encode_ * x;
}

Vec re_encode(const Vec& z, const LinearCodec& codec) {
    return codec.encode(codec.decode(z));
}

void save_codec(const LinearCodec& codec, const std::string& path) {
    const Mat& d = codec.decode_matrix();
    Vec flat(d.size());
    for (int i = 0; i < d.rows(); ++i)
        for (int j = 0; j < d.cols(); ++j) flat[Eigen::Index(i) * d.cols() + j] = d(i, j);
    write_tensor(path, flat, ImageShape{int(d.rows()), int(d.cols()), 1});
}

LinearCodec load_codec(const std::string& path) {
    ImageShape shape;
    Vec flat = read_tensor(path, &shape);
    if (shape.channels != 1)
        throw std::runtime_error("load_codec: expected a single-channel matrix tensor in " + path);
    Mat d(shape.height, shape.width);
    for (int i = 0; i < shape.height; ++i)
        for (int j = 0; j < shape.width; ++j) d(i, j) = flat[Eigen::Index(i) * shape.width + j];
    return LinearCodec::orthonormal(std::move(d));
}

} // namespace dcdp
