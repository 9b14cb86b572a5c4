// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rng.hpp"

#include <string>
#include <vector>

namespace dcdp {

// Linear encoder/decoder pair. The standard construction has a decode matrix
// D with orthonormal columns and encode E = D^T, so E o D is the identity on
// the latent space and D o E is an orthogonal projector on pixel space.
// raw() admits an arbitrary (D, E) pair for experiments with imperfect codecs.
class LinearCodec {
public:
    static LinearCodec orthonormal(Mat decode);
    static LinearCodec raw(Mat decode, Mat encode);
    // Top-r principal directions of the dataset's second-moment matrix.
    static LinearCodec pca(const std::vector<Vec>& dataset, int latent_dim);

    int latent_dim() const { return int(decode_.cols()); }
    int pixel_dim() const { return int(decode_.rows()); }
    bool is_orthonormal() const { return orthonormal_; }

    Vec decode(const Vec& z) const;
    Vec encode(const Vec& x) const;

    const Mat& decode_matrix() const { return decode_; }
    const Mat& encode_matrix() const { return encode_; }

private:
    LinearCodec(Mat decode, Mat encode, bool ortho)
        : decode_(std::move(decode)), encode_(std::move(encode)), orthonormal_(ortho) {}
    Mat decode_;
    Mat encode_;
    bool orthonormal_;
};

// z <- E(D(z)). Identity for the orthonormal codec; kept as an explicit step
// so the solver loop matches the interface of nonlinear codecs.
Vec re_encode(const Vec& z, const LinearCodec& codec);

// Decode-matrix serialization in the flat-text tensor format
// (rows = pixel dim, cols = latent dim). Only orthonormal codecs round-trip.
void save_codec(const LinearCodec& codec, const std::string& path);
LinearCodec load_codec(const std::string& path);

} // namespace dcdp
