#include "tse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace tse {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    void need(std::size_t n, const char* what) const {
        if (in_.size() - pos_ < n) {
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                  std::to_string(pos_));
        }
    }
    template <typename U>
    U uint(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    std::int32_t i32(const char* what) { return static_cast<std::int32_t>(uint<std::uint32_t>(what)); }
    double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const ModelParams& params) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.uint<std::uint32_t>(kCheckpointVersion);
    const NetConfig& c = params.config;
    for (int v : {c.n_rrg, c.n_mrb_per_rrg, c.n_scales, c.base_channels, c.sa_kernel, c.ca_reduction}) w.i32(v);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(c.spatial_pooling));
    w.uint<std::uint64_t>(c.seed);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [path, t] : params.tensors) {
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(path.size()));
        w.bytes(path.data(), path.size());
        const Shape& s = t.shape();
        for (std::size_t d : {s.n, s.c, s.h, s.w}) w.uint<std::uint64_t>(d);
        for (double v : t.values()) w.f64(v);
    }
    return w.take();
}

ModelParams deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
        throw CheckpointError("not a checkpoint: bad magic at byte 0");
    }
    const auto version = r.uint<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelParams params;
    NetConfig& c = params.config;
    c.n_rrg = r.i32("config");
    c.n_mrb_per_rrg = r.i32("config");
    c.n_scales = r.i32("config");
    c.base_channels = r.i32("config");
    c.sa_kernel = r.i32("config");
    c.ca_reduction = r.i32("config");
    const auto pooling = r.uint<std::uint8_t>("config");
    if (pooling > 1) throw CheckpointError("unknown spatial pooling id " + std::to_string(pooling));
    c.spatial_pooling = static_cast<SpatialPooling>(pooling);
    c.seed = r.uint<std::uint64_t>("config");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint carries invalid config: ") + e.what());
    }

    std::map<std::string, Shape> expected;
    for (const ParamSpec& s : param_layout(c)) expected.emplace(s.path, s.shape);

    const auto count = r.uint<std::uint32_t>("record count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.uint<std::uint32_t>("path length");
        std::string path = r.str(len, "path");
        Shape s;
        s.n = r.uint<std::uint64_t>("dims");
        s.c = r.uint<std::uint64_t>("dims");
        s.h = r.uint<std::uint64_t>("dims");
        s.w = r.uint<std::uint64_t>("dims");
        auto it = expected.find(path);
        if (it == expected.end()) throw CheckpointError("checkpoint has unexpected parameter '" + path + "'");
        if (it->second != s) {
            throw CheckpointError("checkpoint parameter '" + path + "' has shape " + s.str() + ", config expects " +
                                  it->second.str());
        }
        if (params.tensors.count(path) != 0) throw CheckpointError("duplicate parameter '" + path + "'");
        r.need(s.numel() * 8, "values");
        std::vector<double> values(s.numel());
        for (double& v : values) v = r.f64("values");
        params.tensors.emplace(std::move(path), Tensor(s, std::move(values)));
    }
    if (params.tensors.size() != expected.size()) {
        for (const auto& [path, shape] : expected) {
            if (params.tensors.count(path) == 0) throw CheckpointError("checkpoint is missing parameter '" + path + "'");
        }
    }
    if (!r.done()) throw CheckpointError("trailing bytes after checkpoint at byte " + std::to_string(r.pos()));
    return params;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    write_file_bytes(path, serialize(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

}  // namespace tse
