#include "scd/encoder.hpp"

#include "doctest.h"
#include "fd.hpp"

using namespace scd;

namespace {

EncoderConfig tiny(int factor) {
    EncoderConfig cfg;
    cfg.num_tdnn_layers = 2;
    cfg.tdnn_channels = 8;
    cfg.downsampling_factor = factor;
    cfg.bilstm_layers = 1;
    cfg.bilstm_hidden = 4;
    return cfg;
}

}  // namespace

TEST_CASE("stride table for the four-layer stack") {
    CHECK(downsampling_strides(1) == std::array<int, 4>{1, 1, 1, 1});
    CHECK(downsampling_strides(2) == std::array<int, 4>{1, 1, 1, 2});
    CHECK(downsampling_strides(4) == std::array<int, 4>{1, 1, 2, 2});
    CHECK(downsampling_strides(8) == std::array<int, 4>{1, 2, 2, 2});
    CHECK(downsampling_strides(16) == std::array<int, 4>{2, 2, 2, 2});
    CHECK_THROWS_AS(downsampling_strides(3), ArgumentError);

    EncoderConfig cfg;
    for (int f : {1, 2, 4, 8, 16}) {
        cfg.downsampling_factor = f;
        const auto s = downsampling_strides(f);
        CHECK(layer_strides(cfg) == std::vector<int>(s.begin(), s.end()));
    }
}

TEST_CASE("encoded length is ceil(T / D)") {
    EncoderConfig cfg = tiny(8);
    cfg.num_tdnn_layers = 4;
    Rng rng(1);
    const EncoderParams p = init_encoder(cfg, 3, rng);
    CHECK(encode(fd::random_matrix(64, 3, rng), cfg, p).frames.rows() == 8);
    CHECK(encode(fd::random_matrix(65, 3, rng), cfg, p).frames.rows() == 9);
    for (int f : {1, 2, 4, 8, 16}) {
        cfg.downsampling_factor = f;
        const EncoderParams q = init_encoder(cfg, 3, rng);
        for (int t = f; t < f + 40; t += 3) {
            const EncodedSequence e = encode(fd::random_matrix(t, 3, rng), cfg, q);
            CHECK(e.frames.rows() == ceil_div(t, f));
            CHECK(e.frames.cols() == cfg.output_dim());
        }
    }
}

TEST_CASE("encoder rejects mismatched inputs") {
    const EncoderConfig cfg = tiny(4);
    Rng rng(2);
    const EncoderParams p = init_encoder(cfg, 3, rng);
    CHECK_THROWS_AS(encode(fd::random_matrix(10, 4, rng), cfg, p), ConfigError);
    CHECK_THROWS_AS(encode(fd::random_matrix(3, 3, rng), cfg, p), ConfigError);
    EncoderConfig bad = cfg;
    bad.tdnn_context = {-1, 0, 2};
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("encoder output responds smoothly to the input") {
    EncoderConfig cfg = tiny(1);
    cfg.num_tdnn_layers = 1;
    cfg.tdnn_context = {0};
    cfg.tdnn_channels = 3;
    Rng rng(3);
    EncoderParams p = init_encoder(cfg, 3, rng);
    p.tdnn[0].weight = Matrix::Identity(3, 3);
    p.tdnn[0].bias.setZero();
    for (auto& dir : p.lstm[0]) dir.w_hidden.setZero();
    Matrix x = fd::random_matrix(3, 3, rng).cwiseAbs();
    const Matrix base = encode(x, cfg, p).frames;
    x(1, 1) += 1e-6;
    const Matrix moved = encode(x, cfg, p).frames;
    const double slope = (moved - base).norm() / 1e-6;
    CHECK(slope > 1e-3);
    CHECK(slope < 1e3);
}

TEST_CASE("encoder is deterministic") {
    const EncoderConfig cfg = tiny(2);
    Rng rng(4);
    const EncoderParams p = init_encoder(cfg, 3, rng);
    const Matrix x = fd::random_matrix(20, 3, rng);
    CHECK(encode(x, cfg, p).frames == encode(x, cfg, p).frames);
}

TEST_CASE("encoder gradients match finite differences") {
    for (int factor : {1, 2, 4}) {
        CAPTURE(factor);
        const EncoderConfig cfg = tiny(factor);
        Rng rng(10 + factor);
        EncoderParams p = init_encoder(cfg, 3, rng);
        const Matrix x = fd::random_matrix(13, 3, rng);
        const Matrix w = fd::random_matrix(ceil_div(13, factor), cfg.output_dim(), rng);
        auto f = [&] { return encode(x, cfg, p).frames.cwiseProduct(w).sum(); };

        EncoderTape tape;
        encode(x, cfg, p, &tape);
        EncoderParams g = zeros_like(p);
        const Matrix dx = encode_backward(cfg, p, tape, w, g);
        TensorList pl;
        TensorList gl;
        append_tensors(p, "", pl);
        append_tensors(g, "", gl);
        CHECK(fd::max_rel_error(pl, gl, f) < 1e-4);

        // Input gradient through the same machinery.
        Matrix xv = x;
        Matrix dxv = dx;
        const TensorList xl{{"x", &xv}};
        const TensorList dl{{"x", &dxv}};
        auto fx = [&] { return encode(xv, cfg, p).frames.cwiseProduct(w).sum(); };
        CHECK(fd::max_rel_error(xl, dl, fx) < 1e-4);
    }
}
