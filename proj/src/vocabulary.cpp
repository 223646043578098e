#include <algorithm>

#include "gdpo/error.hpp"
#include "gdpo/policy.hpp"

namespace gdpo {

namespace {

std::vector<std::string> reserved_tokens() {
    std::vector<std::string> t{"<bos>", "<eos>", "<sep>"};
    for (int c = 0; c < kNumBeliefClasses; ++c) {
        t.push_back(BeliefClass{c}.name());
    }
    return t;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    const auto reserved = reserved_tokens();
    if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
        throw DataError("vocabulary does not start with the reserved tokens");
    }
    for (const std::string& t : tokens) {
        if (index_.contains(t)) {
            throw DataError("duplicate vocabulary token \"" + t + "\"");
        }
        index_.emplace(t, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(t);
    }
}

TokenId Vocabulary::add(const std::string& token) {
    if (auto id = find(token)) {
        return *id;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
}

Vocabulary Vocabulary::from_topics(std::span<const Topic> topics) {
    Vocabulary v;
    for (const Topic& t : topics) {
        for (const auto& w : t.question) {
            v.add(w);
        }
        for (const Belief& b : t.beliefs.beliefs()) {
            for (const auto& w : b.description) {
                v.add(w);
            }
        }
        for (const auto& per_belief : t.templates) {
            for (const ResponseTemplate& tpl : per_belief) {
                for (const auto& w : tpl.tokens()) {
                    v.add(w);
                }
            }
        }
    }
    return v;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

TokenSeq Vocabulary::encode(std::span<const std::string> words) const {
    TokenSeq out;
    out.reserve(words.size());
    for (const auto& w : words) {
        auto id = find(w);
        if (!id) {
            throw DataError("out-of-vocabulary token \"" + w + "\"");
        }
        out.push_back(*id);
    }
    return out;
}

Words Vocabulary::decode(std::span<const TokenId> ids) const {
    Words out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (!contains(id)) {
            throw DataError("token id out of range: " + std::to_string(id));
        }
        out.push_back(tokens_[static_cast<std::size_t>(id)]);
    }
    return out;
}

std::optional<BeliefClass> Vocabulary::class_of(TokenId id) {
    if (id >= kFirstClass && id < kFirstClass + kNumBeliefClasses) {
        return BeliefClass{id - kFirstClass};
    }
    return std::nullopt;
}

std::uint64_t Vocabulary::hash() const {
    // FNV-1a over the tokens, each terminated by a zero byte.
    std::uint64_t h = 1469598103934665603ULL;
    for (const std::string& t : tokens_) {
        for (unsigned char c : t) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0;
        h *= 1099511628211ULL;
    }
    return h;
}

TokenSeq encode_query(const Vocabulary& vocab, std::span<const std::string> question) {
    TokenSeq out{Vocabulary::kBos};
    const TokenSeq q = vocab.encode(question);
    out.insert(out.end(), q.begin(), q.end());
    return out;
}

TokenSeq encode_belief(const Vocabulary& vocab, const Belief& belief) {
    TokenSeq out{Vocabulary::class_token(belief.cls)};
    const TokenSeq d = vocab.encode(belief.description);
    out.insert(out.end(), d.begin(), d.end());
    out.push_back(Vocabulary::kSep);
    return out;
}

TokenSeq encode_response(const Vocabulary& vocab, std::span<const std::string> words) {
    TokenSeq out = vocab.encode(words);
    out.push_back(Vocabulary::kEos);
    return out;
}

TokenSeq concat(std::span<const TokenId> a, std::span<const TokenId> b) {
    TokenSeq out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace gdpo
