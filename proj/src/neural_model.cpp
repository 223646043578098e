#include <cmath>

#include "gdpo/error.hpp"
#include "gdpo/policy.hpp"
#include "gdpo/rng.hpp"

namespace gdpo {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using MutVecMap = Eigen::Map<Eigen::RowVectorXd>;

}  // namespace

// Offsets of each parameter block inside the flat vector.
struct NeuralModel::Layout {
    struct Block {
        std::size_t wq, wk, wv, wo, w1, b1, w2, b2;
    };

    std::size_t vocab, d, hidden, ctx;
    std::size_t tok_emb, pos_emb;
    std::vector<Block> blocks;
    std::size_t w_out, b_out;
    std::size_t total;

    Layout(std::size_t vocab_size, const NeuralConfig& c)
        : vocab(vocab_size), d(static_cast<std::size_t>(c.d_model)), hidden(2 * d), ctx(c.context_length) {
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            const std::size_t at = off;
            off += n;
            return at;
        };
        tok_emb = take(vocab * d);
        pos_emb = take(ctx * d);
        for (int l = 0; l < c.layers; ++l) {
            Block b{};
            b.wq = take(d * d);
            b.wk = take(d * d);
            b.wv = take(d * d);
            b.wo = take(d * d);
            b.w1 = take(d * hidden);
            b.b1 = take(hidden);
            b.w2 = take(hidden * d);
            b.b2 = take(d);
            blocks.push_back(b);
        }
        w_out = take(d * vocab);
        b_out = take(vocab);
        total = off;
    }
};

// Activations kept for the backward pass.
struct NeuralModel::Trace {
    struct BlockTrace {
        RowMatrix x_in, q, k, v, attn, mixed, x_mid, hidden, x_out;
    };
    std::vector<BlockTrace> blocks;
    RowMatrix final;
};

NeuralModel::NeuralModel(std::size_t vocab_size, const NeuralConfig& config)
    : vocab_size_(vocab_size), config_(config) {
    if (config.d_model < 1 || config.d_model > 64) {
        throw ConfigError("neural d_model must be in [1, 64]");
    }
    if (config.layers < 1 || config.layers > 2) {
        throw ConfigError("neural layers must be 1 or 2");
    }
    if (config.context_length < 2) {
        throw ConfigError("neural context_length must be >= 2");
    }
    const Layout lay(vocab_size, config);
    theta_.assign(lay.total, 0.0);
    Rng rng(config.init_seed);
    // Everything except the output head gets N(0, init_scale^2).
    for (std::size_t i = 0; i < lay.w_out; ++i) {
        theta_[i] = config.init_scale * rng.normal();
    }
    for (const auto& b : lay.blocks) {
        std::fill(theta_.begin() + static_cast<std::ptrdiff_t>(b.b1),
                  theta_.begin() + static_cast<std::ptrdiff_t>(b.b1 + lay.hidden), 0.0);
        std::fill(theta_.begin() + static_cast<std::ptrdiff_t>(b.b2),
                  theta_.begin() + static_cast<std::ptrdiff_t>(b.b2 + lay.d), 0.0);
    }
}

NeuralModel::Trace NeuralModel::run(std::span<const TokenId> seq, std::size_t n) const {
    const Layout lay(vocab_size_, config_);
    const double* p = theta_.data();
    const auto d = static_cast<Eigen::Index>(lay.d);
    const auto h = static_cast<Eigen::Index>(lay.hidden);
    const auto rows = static_cast<Eigen::Index>(n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(lay.d));

    ConstMap tok(p + lay.tok_emb, static_cast<Eigen::Index>(lay.vocab), d);
    ConstMap pos(p + lay.pos_emb, static_cast<Eigen::Index>(lay.ctx), d);

    RowMatrix x(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
        x.row(i) = tok.row(seq[static_cast<std::size_t>(i)]) + pos.row(i);
    }

    Trace tr;
    for (const auto& b : lay.blocks) {
        Trace::BlockTrace bt;
        bt.x_in = x;
        ConstMap wq(p + b.wq, d, d), wk(p + b.wk, d, d), wv(p + b.wv, d, d), wo(p + b.wo, d, d);
        ConstMap w1(p + b.w1, d, h), w2(p + b.w2, h, d);
        ConstVecMap b1(p + b.b1, h), b2(p + b.b2, d);

        bt.q = x * wq;
        bt.k = x * wk;
        bt.v = x * wv;
        bt.attn = RowMatrix::Zero(rows, rows);
        for (Eigen::Index i = 0; i < rows; ++i) {
            double mx = -INFINITY;
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double s = bt.q.row(i).dot(bt.k.row(j)) * inv_sqrt_d;
                bt.attn(i, j) = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (Eigen::Index j = 0; j <= i; ++j) {
                bt.attn(i, j) = std::exp(bt.attn(i, j) - mx);
                z += bt.attn(i, j);
            }
            for (Eigen::Index j = 0; j <= i; ++j) {
                bt.attn(i, j) /= z;
            }
        }
        bt.mixed = bt.attn * bt.v;
        bt.x_mid = x + bt.mixed * wo;
        bt.hidden = ((bt.x_mid * w1).rowwise() + b1).array().tanh().matrix();
        bt.x_out = (bt.x_mid + bt.hidden * w2).rowwise() + b2;
        x = bt.x_out;
        tr.blocks.push_back(std::move(bt));
    }
    tr.final = std::move(x);
    return tr;
}

LogitMatrix NeuralModel::forward(std::span<const TokenId> seq, std::size_t first, std::size_t count) const {
    const std::size_t n = first + count;
    if (n > config_.context_length || n > seq.size()) {
        throw DataError("sequence exceeds the neural context length");
    }
    const Layout lay(vocab_size_, config_);
    const Trace tr = run(seq, n);
    ConstMap w_out(theta_.data() + lay.w_out, static_cast<Eigen::Index>(lay.d), static_cast<Eigen::Index>(lay.vocab));
    ConstVecMap b_out(theta_.data() + lay.b_out, static_cast<Eigen::Index>(lay.vocab));
    LogitMatrix logits =
        (tr.final.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) * w_out).rowwise() +
        b_out;
    return logits;
}

void NeuralModel::backward(std::span<const TokenId> seq, std::size_t first, const LogitMatrix& dlogits,
                           std::span<double> grad) const {
    const auto count = static_cast<std::size_t>(dlogits.rows());
    const std::size_t n = first + count;
    if (n > config_.context_length || n > seq.size()) {
        throw DataError("sequence exceeds the neural context length");
    }
    const Layout lay(vocab_size_, config_);
    const Trace tr = run(seq, n);
    const double* p = theta_.data();
    double* g = grad.data();
    const auto d = static_cast<Eigen::Index>(lay.d);
    const auto h = static_cast<Eigen::Index>(lay.hidden);
    const auto v = static_cast<Eigen::Index>(lay.vocab);
    const auto rows = static_cast<Eigen::Index>(n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(lay.d));

    // Output head.
    RowMatrix dlog = RowMatrix::Zero(rows, v);
    dlog.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) = dlogits;
    ConstMap w_out(p + lay.w_out, d, v);
    MutMap(g + lay.w_out, d, v).noalias() += tr.final.transpose() * dlog;
    MutVecMap(g + lay.b_out, v) += dlog.colwise().sum();
    RowMatrix dx = dlog * w_out.transpose();

    for (std::size_t li = lay.blocks.size(); li-- > 0;) {
        const auto& b = lay.blocks[li];
        const auto& bt = tr.blocks[li];
        ConstMap wq(p + b.wq, d, d), wk(p + b.wk, d, d), wv(p + b.wv, d, d), wo(p + b.wo, d, d);
        ConstMap w1(p + b.w1, d, h), w2(p + b.w2, h, d);

        // x_out = x_mid + tanh(x_mid w1 + b1) w2 + b2
        MutMap(g + b.w2, h, d).noalias() += bt.hidden.transpose() * dx;
        MutVecMap(g + b.b2, d) += dx.colwise().sum();
        RowMatrix dpre = (dx * w2.transpose()).array() * (1.0 - bt.hidden.array().square());
        MutMap(g + b.w1, d, h).noalias() += bt.x_mid.transpose() * dpre;
        MutVecMap(g + b.b1, h) += dpre.colwise().sum();
        RowMatrix dmid = dx + dpre * w1.transpose();

        // x_mid = x_in + (attn v) wo
        MutMap(g + b.wo, d, d).noalias() += bt.mixed.transpose() * dmid;
        RowMatrix dmixed = dmid * wo.transpose();
        RowMatrix dattn = dmixed * bt.v.transpose();
        RowMatrix dv = bt.attn.transpose() * dmixed;

        RowMatrix dscore = RowMatrix::Zero(rows, rows);
        for (Eigen::Index i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (Eigen::Index j = 0; j <= i; ++j) {
                dot += bt.attn(i, j) * dattn(i, j);
            }
            for (Eigen::Index j = 0; j <= i; ++j) {
                dscore(i, j) = bt.attn(i, j) * (dattn(i, j) - dot) * inv_sqrt_d;
            }
        }
        RowMatrix dq = dscore * bt.k;
        RowMatrix dk = dscore.transpose() * bt.q;

        MutMap(g + b.wq, d, d).noalias() += bt.x_in.transpose() * dq;
        MutMap(g + b.wk, d, d).noalias() += bt.x_in.transpose() * dk;
        MutMap(g + b.wv, d, d).noalias() += bt.x_in.transpose() * dv;
        dx = dmid + dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
    }

    MutMap tok(g + lay.tok_emb, v, d);
    MutMap pos(g + lay.pos_emb, static_cast<Eigen::Index>(lay.ctx), d);
    for (Eigen::Index i = 0; i < rows; ++i) {
        tok.row(seq[static_cast<std::size_t>(i)]) += dx.row(i);
        pos.row(i) += dx.row(i);
    }
}

}  // namespace gdpo
