#include "scd/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace scd {

namespace {

Matrix uniform(int rows, int cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix tdnn_forward(const Matrix& x, const TdnnParams& p, const std::vector<int>& context, int stride,
                    TdnnCache& cache) {
    const int rows = static_cast<int>(x.rows());
    const int in = static_cast<int>(x.cols());
    const int k = static_cast<int>(context.size());
    const int out_rows = ceil_div(rows, stride);

    cache.input_rows = rows;
    cache.spliced.resize(out_rows, k * in);
    cache.source_rows.resize(static_cast<std::size_t>(out_rows) * k);
    for (int j = 0; j < out_rows; ++j) {
        const int centre = j * stride;
        for (int c = 0; c < k; ++c) {
            const int src = std::clamp(centre + context[c], 0, rows - 1);
            cache.source_rows[static_cast<std::size_t>(j) * k + c] = src;
            cache.spliced.block(j, c * in, 1, in) = x.row(src);
        }
    }
    cache.pre.noalias() = cache.spliced * p.weight;
    cache.pre.rowwise() += p.bias.row(0);
    return cache.pre.cwiseMax(0.0);
}

Matrix tdnn_backward(const TdnnParams& p, const TdnnCache& cache, const Matrix& d_out, TdnnParams& g) {
    const Matrix d_pre = d_out.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
    g.weight.noalias() += cache.spliced.transpose() * d_pre;
    g.bias += d_pre.colwise().sum();
    const Matrix d_spliced = d_pre * p.weight.transpose();

    const int k = static_cast<int>(cache.source_rows.size() / std::max<Eigen::Index>(1, d_out.rows()));
    const int in = static_cast<int>(d_spliced.cols()) / k;
    Matrix d_x = Matrix::Zero(cache.input_rows, in);
    for (int j = 0; j < d_out.rows(); ++j) {
        for (int c = 0; c < k; ++c) {
            d_x.row(cache.source_rows[static_cast<std::size_t>(j) * k + c]) += d_spliced.block(j, c * in, 1, in);
        }
    }
    return d_x;
}

Matrix lstm_forward(const Matrix& x, const LstmParams& p, bool reverse, LstmCache& cache) {
    const int rows = static_cast<int>(x.rows());
    const int h = static_cast<int>(p.w_hidden.rows());
    Matrix a = x * p.w_input;
    a.rowwise() += p.bias.row(0);

    cache.gates.resize(rows, 4 * h);
    cache.cell.resize(rows, h);
    cache.hidden.resize(rows, h);
    Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd z(4 * h);
    for (int s = 0; s < rows; ++s) {
        const int t = reverse ? rows - 1 - s : s;
        z.noalias() = a.row(t) + h_prev * p.w_hidden;
        for (int i = 0; i < h; ++i) {
            const double ig = sigmoid(z(i));
            const double fg = sigmoid(z(h + i));
            const double cg = std::tanh(z(2 * h + i));
            const double og = sigmoid(z(3 * h + i));
            const double c = fg * c_prev(i) + ig * cg;
            cache.gates(t, i) = ig;
            cache.gates(t, h + i) = fg;
            cache.gates(t, 2 * h + i) = cg;
            cache.gates(t, 3 * h + i) = og;
            cache.cell(t, i) = c;
            cache.hidden(t, i) = og * std::tanh(c);
        }
        h_prev = cache.hidden.row(t);
        c_prev = cache.cell.row(t);
    }
    return cache.hidden;
}

Matrix lstm_backward(const Matrix& x, const LstmParams& p, bool reverse, const LstmCache& cache, const Matrix& d_hidden,
                     LstmParams& g) {
    const int rows = static_cast<int>(x.rows());
    const int h = static_cast<int>(p.w_hidden.rows());
    Matrix d_a(rows, 4 * h);
    Matrix h_prev_all = Matrix::Zero(rows, h);
    Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(h);

    for (int s = rows - 1; s >= 0; --s) {
        const int t = reverse ? rows - 1 - s : s;
        const int prev = reverse ? t + 1 : t - 1;
        const bool has_prev = s > 0;
        if (has_prev) h_prev_all.row(t) = cache.hidden.row(prev);
        for (int i = 0; i < h; ++i) {
            const double ig = cache.gates(t, i);
            const double fg = cache.gates(t, h + i);
            const double cg = cache.gates(t, 2 * h + i);
            const double og = cache.gates(t, 3 * h + i);
            const double tc = std::tanh(cache.cell(t, i));
            const double c_prev = has_prev ? cache.cell(prev, i) : 0.0;
            const double dh = d_hidden(t, i) + dh_next(i);
            const double d_og = dh * tc;
            const double dc = dh * og * (1.0 - tc * tc) + dc_next(i);
            d_a(t, i) = dc * cg * ig * (1.0 - ig);
            d_a(t, h + i) = dc * c_prev * fg * (1.0 - fg);
            d_a(t, 2 * h + i) = dc * ig * (1.0 - cg * cg);
            d_a(t, 3 * h + i) = d_og * og * (1.0 - og);
            dc_next(i) = dc * fg;
        }
        dh_next.noalias() = d_a.row(t) * p.w_hidden.transpose();
    }
    g.w_hidden.noalias() += h_prev_all.transpose() * d_a;
    g.w_input.noalias() += x.transpose() * d_a;
    g.bias += d_a.colwise().sum();
    return d_a * p.w_input.transpose();
}

}  // namespace

void validate(const EncoderConfig& cfg) {
    if (cfg.num_tdnn_layers < 1) throw ConfigError("encoder.num_tdnn_layers must be >= 1");
    if (cfg.tdnn_channels < 1) throw ConfigError("encoder.tdnn_channels must be >= 1");
    if (cfg.tdnn_context.empty()) throw ConfigError("encoder.tdnn_context must not be empty");
    const int n = static_cast<int>(cfg.tdnn_context.size());
    for (int i = 0; i < n; ++i) {
        if (cfg.tdnn_context[i] != -cfg.tdnn_context[n - 1 - i])
            throw ConfigError("encoder.tdnn_context must be symmetric and sorted");
        if (i > 0 && cfg.tdnn_context[i] <= cfg.tdnn_context[i - 1])
            throw ConfigError("encoder.tdnn_context must be strictly increasing");
    }
    const int d = cfg.downsampling_factor;
    if (d != 1 && d != 2 && d != 4 && d != 8 && d != 16)
        throw ConfigError("encoder.downsampling_factor must be one of 1, 2, 4, 8, 16");
    int log2d = 0;
    while ((1 << log2d) < d) ++log2d;
    if (log2d > cfg.num_tdnn_layers)
        throw ConfigError("encoder.downsampling_factor needs at least log2(D) TDNN layers");
    if (cfg.bilstm_layers < 1) throw ConfigError("encoder.bilstm_layers must be >= 1");
    if (cfg.bilstm_hidden < 1) throw ConfigError("encoder.bilstm_hidden must be >= 1");
}

std::array<int, 4> downsampling_strides(int factor) {
    switch (factor) {
        case 1: return {1, 1, 1, 1};
        case 2: return {1, 1, 1, 2};
        case 4: return {1, 1, 2, 2};
        case 8: return {1, 2, 2, 2};
        case 16: return {2, 2, 2, 2};
        default: throw ArgumentError("unsupported downsampling factor " + std::to_string(factor));
    }
}

std::vector<int> layer_strides(const EncoderConfig& cfg) {
    validate(cfg);
    std::vector<int> strides(cfg.num_tdnn_layers, 1);
    int remaining = cfg.downsampling_factor;
    for (int i = cfg.num_tdnn_layers - 1; i >= 0 && remaining > 1; --i) {
        strides[i] = 2;
        remaining /= 2;
    }
    return strides;
}

EncoderParams init_encoder(const EncoderConfig& cfg, int input_dim, Rng& rng) {
    validate(cfg);
    if (input_dim < 1) throw ConfigError("encoder input dimension must be >= 1");
    EncoderParams p;
    const int k = static_cast<int>(cfg.tdnn_context.size());
    int in = input_dim;
    for (int l = 0; l < cfg.num_tdnn_layers; ++l) {
        const int fan_in = k * in;
        p.tdnn.push_back({uniform(fan_in, cfg.tdnn_channels, std::sqrt(6.0 / fan_in), rng),
                          Matrix::Zero(1, cfg.tdnn_channels)});
        in = cfg.tdnn_channels;
    }
    const int h = cfg.bilstm_hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (int l = 0; l < cfg.bilstm_layers; ++l) {
        std::array<LstmParams, 2> dirs;
        for (auto& d : dirs) {
            d.w_input = uniform(in, 4 * h, bound, rng);
            d.w_hidden = uniform(h, 4 * h, bound, rng);
            d.bias = Matrix::Zero(1, 4 * h);
            d.bias.block(0, h, 1, h).setConstant(1.0);  // forget gate
        }
        p.lstm.push_back(std::move(dirs));
        in = 2 * h;
    }
    return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
    EncoderParams z = p;
    for (auto& l : z.tdnn) {
        l.weight.setZero();
        l.bias.setZero();
    }
    for (auto& layer : z.lstm) {
        for (auto& d : layer) {
            d.w_input.setZero();
            d.w_hidden.setZero();
            d.bias.setZero();
        }
    }
    return z;
}

void append_tensors(EncoderParams& p, const std::string& prefix, TensorList& out) {
    for (std::size_t l = 0; l < p.tdnn.size(); ++l) {
        const std::string base = prefix + "tdnn" + std::to_string(l) + ".";
        out.push_back({base + "weight", &p.tdnn[l].weight});
        out.push_back({base + "bias", &p.tdnn[l].bias});
    }
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
        for (int d = 0; d < 2; ++d) {
            const std::string base = prefix + "lstm" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
            out.push_back({base + "w_input", &p.lstm[l][d].w_input});
            out.push_back({base + "w_hidden", &p.lstm[l][d].w_hidden});
            out.push_back({base + "bias", &p.lstm[l][d].bias});
        }
    }
}

EncodedSequence encode(const Matrix& x, const EncoderConfig& cfg, const EncoderParams& params, EncoderTape* tape) {
    const std::vector<int> strides = layer_strides(cfg);
    if (params.tdnn.size() != strides.size() || static_cast<int>(params.lstm.size()) != cfg.bilstm_layers)
        throw ConfigError("encoder parameters do not match the configuration");
    if (x.rows() < cfg.downsampling_factor)
        throw ConfigError("input shorter than the downsampling factor");
    if (params.tdnn[0].weight.rows() != static_cast<Eigen::Index>(cfg.tdnn_context.size()) * x.cols())
        throw ConfigError("encoder input dimension mismatch");

    EncoderTape local;
    EncoderTape& tp = tape ? *tape : local;
    tp.tdnn.assign(strides.size(), {});
    tp.lstm_input.assign(params.lstm.size(), {});
    tp.lstm.assign(params.lstm.size(), {});

    Matrix cur = x;
    for (std::size_t l = 0; l < strides.size(); ++l) cur = tdnn_forward(cur, params.tdnn[l], cfg.tdnn_context, strides[l], tp.tdnn[l]);
    for (std::size_t l = 0; l < params.lstm.size(); ++l) {
        tp.lstm_input[l] = cur;
        const Matrix fwd = lstm_forward(cur, params.lstm[l][0], false, tp.lstm[l][0]);
        const Matrix bwd = lstm_forward(cur, params.lstm[l][1], true, tp.lstm[l][1]);
        cur.resize(fwd.rows(), fwd.cols() + bwd.cols());
        cur << fwd, bwd;
    }

    EncodedSequence out;
    out.frames = std::move(cur);
    out.downsampling_factor = cfg.downsampling_factor;
    out.input_frames = static_cast<int>(x.rows());
    return out;
}

Matrix encode_backward(const EncoderConfig& cfg, const EncoderParams& params, const EncoderTape& tape,
                       const Matrix& d_out, EncoderParams& grads) {
    Matrix d = d_out;
    const int h = cfg.bilstm_hidden;
    for (int l = static_cast<int>(params.lstm.size()) - 1; l >= 0; --l) {
        const Matrix& in = tape.lstm_input[l];
        const Matrix d_fwd = d.leftCols(h);
        const Matrix d_bwd = d.rightCols(h);
        Matrix d_in = lstm_backward(in, params.lstm[l][0], false, tape.lstm[l][0], d_fwd, grads.lstm[l][0]);
        d_in += lstm_backward(in, params.lstm[l][1], true, tape.lstm[l][1], d_bwd, grads.lstm[l][1]);
        d = std::move(d_in);
    }
    for (int l = static_cast<int>(params.tdnn.size()) - 1; l >= 0; --l)
        d = tdnn_backward(params.tdnn[l], tape.tdnn[l], d, grads.tdnn[l]);
    return d;
}

}  // namespace scd
