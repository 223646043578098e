#include <algorithm>

#include "gdpo/error.hpp"
#include "gdpo/policy.hpp"

namespace gdpo {

TabularModel::TabularModel(std::size_t vocab_size, int window, std::size_t context_length)
    : vocab_size_(vocab_size), window_(window), context_length_(context_length), theta_(vocab_size, 0.0) {
    if (window < 1) {
        throw ConfigError("tabular window must be >= 1");
    }
    if (vocab_size == 0) {
        throw ConfigError("empty vocabulary");
    }
}

std::uint64_t TabularModel::context_key(std::span<const TokenId> prefix, int window) {
    const std::size_t w = std::min(prefix.size(), static_cast<std::size_t>(window));
    std::uint64_t h = 0xcbf29ce484222325ULL ^ w;
    for (std::size_t i = prefix.size() - w; i < prefix.size(); ++i) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(prefix[i])) + 0x9e3779b97f4a7c15ULL;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    return h;
}

std::size_t TabularModel::register_key(std::uint64_t key) {
    auto [it, inserted] = rows_.emplace(key, keys_.size() + 1);
    if (inserted) {
        keys_.push_back(key);
        theta_.resize(num_rows() * vocab_size_, 0.0);
    }
    return it->second;
}

void TabularModel::register_sequence(std::span<const TokenId> seq) {
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        register_key(context_key(seq.first(t + 1), window_));
    }
}

std::size_t TabularModel::row_of(std::span<const TokenId> prefix) const {
    auto it = rows_.find(context_key(prefix, window_));
    return it == rows_.end() ? 0 : it->second;
}

std::span<double> TabularModel::row(std::size_t r) {
    return std::span<double>(theta_).subspan(r * vocab_size_, vocab_size_);
}

std::span<const double> TabularModel::row(std::size_t r) const {
    return std::span<const double>(theta_).subspan(r * vocab_size_, vocab_size_);
}

LogitMatrix TabularModel::forward(std::span<const TokenId> seq, std::size_t first, std::size_t count) const {
    LogitMatrix logits(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(vocab_size_));
    for (std::size_t r = 0; r < count; ++r) {
        const auto src = row(row_of(seq.first(first + r + 1)));
        std::copy(src.begin(), src.end(), logits.row(static_cast<Eigen::Index>(r)).data());
    }
    return logits;
}

void TabularModel::backward(std::span<const TokenId> seq, std::size_t first, const LogitMatrix& dlogits,
                            std::span<double> grad) const {
    for (Eigen::Index r = 0; r < dlogits.rows(); ++r) {
        const std::size_t row_index = row_of(seq.first(first + static_cast<std::size_t>(r) + 1));
        double* dst = grad.data() + row_index * vocab_size_;
        const double* src = dlogits.row(r).data();
        for (std::size_t v = 0; v < vocab_size_; ++v) {
            dst[v] += src[v];
        }
    }
}

}  // namespace gdpo
