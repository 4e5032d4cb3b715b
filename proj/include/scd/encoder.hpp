#pragma once

#include "scd/common.hpp"

#include <array>
#include <vector>

namespace scd {

struct EncoderConfig {
    int num_tdnn_layers = 4;
    int tdnn_channels = 512;
    std::vector<int> tdnn_context{-2, -1, 0, 1, 2};
    int downsampling_factor = 8;
    int bilstm_layers = 2;
    int bilstm_hidden = 256;

    int output_dim() const { return 2 * bilstm_hidden; }
};

void validate(const EncoderConfig& cfg);

// Per-layer strides of the four-layer TDNN stack for a temporal downsampling
// factor in {1, 2, 4, 8, 16}.
std::array<int, 4> downsampling_strides(int factor);

// Strides for an arbitrary number of TDNN layers: factors of two are placed on
// the last layers, which reproduces downsampling_strides() for four layers.
std::vector<int> layer_strides(const EncoderConfig& cfg);

struct TdnnParams {
    Matrix weight;  // (context * in) x out
    Matrix bias;    // 1 x out
};

// Gate blocks are ordered [input, forget, cell, output].
struct LstmParams {
    Matrix w_input;   // in x 4h
    Matrix w_hidden;  // h x 4h
    Matrix bias;      // 1 x 4h
};

struct EncoderParams {
    std::vector<TdnnParams> tdnn;
    std::vector<std::array<LstmParams, 2>> lstm;  // [forward, backward] per layer
};

EncoderParams init_encoder(const EncoderConfig& cfg, int input_dim, Rng& rng);
// Same shapes, all zeros; used as a gradient accumulator.
EncoderParams zeros_like(const EncoderParams& p);
void append_tensors(EncoderParams& p, const std::string& prefix, TensorList& out);

struct TdnnCache {
    Matrix spliced;
    Matrix pre;
    std::vector<int> source_rows;  // input row for every (output frame, context) pair
    int input_rows = 0;
};

struct LstmCache {
    Matrix gates;   // T x 4h, post-nonlinearity
    Matrix cell;    // T x h
    Matrix hidden;  // T x h
};

struct EncoderTape {
    std::vector<TdnnCache> tdnn;
    std::vector<Matrix> lstm_input;
    std::vector<std::array<LstmCache, 2>> lstm;
};

struct EncodedSequence {
    Matrix frames;  // T' x H
    int downsampling_factor = 1;
    int input_frames = 0;
};

// x is T x F. The result has ceil(T / D) rows; context windows and the strided
// tail are padded by edge replication.
EncodedSequence encode(const Matrix& x, const EncoderConfig& cfg, const EncoderParams& params,
                       EncoderTape* tape = nullptr);

// Back-propagates d_out (T' x H) through a recorded forward pass, accumulating
// into grads. Returns the gradient with respect to the input features.
Matrix encode_backward(const EncoderConfig& cfg, const EncoderParams& params, const EncoderTape& tape,
                       const Matrix& d_out, EncoderParams& grads);

}  // namespace scd
