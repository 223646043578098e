#include <cstring>
#include <fstream>
#include <iterator>

#include "gdpo/error.hpp"
#include "gdpo/policy.hpp"

namespace gdpo {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'P', 'O', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const std::vector<char>& bytes, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(bytes[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
public:
    template <class T>
    void put(T v) {
        const auto at = buf_.size();
        buf_.resize(at + sizeof(T));
        std::memcpy(buf_.data() + at, &v, sizeof(T));
    }
    void put_bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    std::vector<char>& bytes() { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(const std::vector<char>& buf, std::size_t end) : buf_(buf), end_(end) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) {
            throw DataError("truncated checkpoint");
        }
    }

    const std::vector<char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
    Writer w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(policy.backend() == Backend::tabular ? 0 : 1);
    const Vocabulary& vocab = policy.vocab();
    w.put<std::uint64_t>(vocab.hash());
    w.put<std::uint64_t>(vocab.size());
    for (const std::string& t : vocab.tokens()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.size()));
        w.put_bytes(t.data(), t.size());
    }
    if (policy.backend() == Backend::tabular) {
        const auto& m = dynamic_cast<const TabularModel&>(policy.model());
        w.put<std::int32_t>(m.window());
        w.put<std::uint64_t>(m.context_length());
        w.put<std::uint64_t>(m.keys().size());
        for (std::uint64_t k : m.keys()) {
            w.put<std::uint64_t>(k);
        }
    } else {
        const auto& c = dynamic_cast<const NeuralModel&>(policy.model()).config();
        w.put<std::int32_t>(c.d_model);
        w.put<std::int32_t>(c.layers);
        w.put<std::uint64_t>(c.context_length);
        w.put<double>(c.init_scale);
        w.put<std::uint64_t>(c.init_seed);
    }
    const auto theta = policy.params();
    w.put<std::uint64_t>(theta.size());
    for (double v : theta) {
        w.put<double>(v);
    }
    w.put<std::uint64_t>(fnv1a(w.bytes(), w.bytes().size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint " + path.string());
    }
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

Policy load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    const std::size_t body = buf.size() - 8;
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + body, 8);
    if (stored != fnv1a(buf, body)) {
        throw DataError("checkpoint checksum mismatch: " + path.string());
    }

    Reader r(buf, body);
    r.get_string(sizeof(kMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    }
    const auto tag = r.get<std::uint32_t>();
    if (tag > 1) {
        throw DataError("unknown checkpoint backend tag " + std::to_string(tag));
    }
    const auto vocab_hash = r.get<std::uint64_t>();
    const auto n_tokens = r.get<std::uint64_t>();
    std::vector<std::string> tokens;
    for (std::uint64_t i = 0; i < n_tokens; ++i) {
        tokens.push_back(r.get_string(r.get<std::uint32_t>()));
    }
    Vocabulary vocab(std::move(tokens));
    if (vocab.hash() != vocab_hash) {
        throw DataError("checkpoint vocabulary hash mismatch");
    }

    std::unique_ptr<SequenceModel> model;
    if (tag == 0) {
        const auto window = r.get<std::int32_t>();
        const auto ctx = r.get<std::uint64_t>();
        auto tab = std::make_unique<TabularModel>(vocab.size(), window, ctx);
        const auto n_keys = r.get<std::uint64_t>();
        for (std::uint64_t i = 0; i < n_keys; ++i) {
            tab->register_key(r.get<std::uint64_t>());
        }
        model = std::move(tab);
    } else {
        NeuralConfig c;
        c.d_model = r.get<std::int32_t>();
        c.layers = r.get<std::int32_t>();
        c.context_length = r.get<std::uint64_t>();
        c.init_scale = r.get<double>();
        c.init_seed = r.get<std::uint64_t>();
        model = std::make_unique<NeuralModel>(vocab.size(), c);
    }
    const auto n_params = r.get<std::uint64_t>();
    auto theta = model->params();
    if (n_params != theta.size()) {
        throw DataError("checkpoint parameter count does not match its backend configuration");
    }
    for (double& v : theta) {
        v = r.get<double>();
    }
    if (!r.at_end()) {
        throw DataError("trailing bytes in checkpoint");
    }
    return Policy(std::move(vocab), std::move(model));
}

}  // namespace gdpo
