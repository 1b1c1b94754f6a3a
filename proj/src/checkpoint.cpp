#include <zlib.h>

#include <cstring>

#include "ssga/error.hpp"
#include "ssga/trainer.hpp"

namespace ssga {

namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes, std::size_t pos = 0) : b_(bytes), pos_(pos) {}

    template <class U>
    U le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    std::string take(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw io_error("checkpoint: truncated file");
    }
    const std::string& b_;
    std::size_t pos_;
};

std::uint32_t crc(const std::string& bytes, std::size_t from) {
    uLong c = crc32(0L, Z_NULL, 0);
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + from), static_cast<uInt>(bytes.size() - from));
    return static_cast<std::uint32_t>(c);
}

Tensor u64_tensor(std::uint64_t v) {
    return Tensor({2}, {static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffULL)});
}

std::uint64_t tensor_u64(const Tensor& t, std::size_t at = 0) {
    return (static_cast<std::uint64_t>(t[at]) << 32) | static_cast<std::uint64_t>(t[at + 1]);
}

Tensor rng_tensor(const RngStream& r) {
    const auto s = r.stream_seed(), d = r.draws();
    return Tensor({4}, {static_cast<double>(s >> 32), static_cast<double>(s & 0xffffffffULL),
                        static_cast<double>(d >> 32), static_cast<double>(d & 0xffffffffULL)});
}

const std::string kPrefixes[] = {"ema/", "src/", "best/", "adam.m/", "adam.v/"};

}  // namespace

std::string encode_checkpoint(const std::map<std::string, Tensor>& entries) {
    std::string out = "SSGA";
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, 0);  // CRC, patched below
    const std::size_t payload = out.size();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        if (name.size() > 0xffff) throw config_error("checkpoint: entry name too long");
        if (t.rank() > 0xff) throw config_error("checkpoint: tensor rank too large");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put_u8(out, t.dtype() == DType::f32 ? 0 : 1);
        put_u8(out, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t.data()) {
            if (t.dtype() == DType::f32) {
                std::uint32_t bits;
                const float f = static_cast<float>(v);
                std::memcpy(&bits, &f, 4);
                put_le(out, bits);
            } else {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                put_le(out, bits);
            }
        }
    }
    const std::uint32_t c = crc(out, payload);
    for (std::size_t i = 0; i < 4; ++i) out[8 + i] = static_cast<char>((c >> (8 * i)) & 0xff);
    return out;
}

std::map<std::string, Tensor> decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || r.take(4) != "SSGA") throw io_error("checkpoint: bad magic");
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw io_error("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    const auto stored = r.le<std::uint32_t>();
    if (crc(bytes, 12) != stored) throw io_error("checkpoint: CRC mismatch");
    const auto count = r.le<std::uint32_t>();
    std::map<std::string, Tensor> out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto len = r.le<std::uint16_t>();
        std::string name = r.take(len);
        const auto dtype = r.le<std::uint8_t>();
        if (dtype > 1) throw io_error("checkpoint: entry '" + name + "' has unknown dtype");
        const auto ndim = r.le<std::uint8_t>();
        Shape shape(ndim);
        for (auto& d : shape) d = r.le<std::uint32_t>();
        Tensor t(shape, dtype == 0 ? DType::f32 : DType::f64);
        for (auto& v : t.data()) {
            if (dtype == 0) {
                const auto bits = r.le<std::uint32_t>();
                float f;
                std::memcpy(&f, &bits, 4);
                v = f;
            } else {
                const auto bits = r.le<std::uint64_t>();
                std::memcpy(&v, &bits, 8);
            }
        }
        if (!out.emplace(std::move(name), std::move(t)).second) throw io_error("checkpoint: duplicate entry");
    }
    if (!r.done()) throw io_error("checkpoint: trailing bytes");
    return out;
}

std::map<std::string, Tensor> state_entries(const TrainState& s) {
    std::map<std::string, Tensor> e;
    for (const auto& [n, t] : s.g) e[n] = t;
    for (const auto& [n, t] : s.d) e[n] = t;
    const ParameterSet* sets[] = {&s.ema, &s.source_g, &s.best_g, &s.adam_m, &s.adam_v};
    for (std::size_t i = 0; i < 5; ++i)
        for (const auto& [n, t] : *sets[i]) e[kPrefixes[i] + n] = t;

    e["meta.phase"] = Tensor({1}, {static_cast<double>(s.phase)});
    e["meta.epoch"] = u64_tensor(s.epoch);
    e["meta.config_hash"] = u64_tensor(s.config_hash);
    e["meta.selected_epoch"] = u64_tensor(s.selected_epoch);
    e["meta.adam_steps_g"] = u64_tensor(s.adam_steps_g);
    e["meta.adam_steps_d"] = u64_tensor(s.adam_steps_d);
    e["meta.ppl_mean"] = Tensor({1}, {s.ppl_mean});
    if (!s.config_text.empty()) {
        Tensor text({s.config_text.size()}, DType::f32);
        for (std::size_t i = 0; i < s.config_text.size(); ++i)
            text[i] = static_cast<unsigned char>(s.config_text[i]);
        e["meta.config"] = text;
    }
    e["rng.latent"] = rng_tensor(s.latent);
    e["rng.probe"] = rng_tensor(s.probe);
    e["rng.data"] = rng_tensor(s.data);
    if (!s.history.empty()) {
        const std::size_t cols = 7 + s.history[0].contributions.size();
        Tensor h({s.history.size(), cols});
        for (std::size_t r = 0; r < s.history.size(); ++r) {
            const auto& row = s.history[r];
            if (row.contributions.size() + 7 != cols) throw config_error("checkpoint: ragged metrics history");
            const double fixed[7] = {static_cast<double>(row.epoch), row.fid_proxy, row.intra_div, row.path_mean,
                                     row.staircase, row.loss_g, row.loss_d};
            for (std::size_t c = 0; c < 7; ++c) h[r * cols + c] = fixed[c];
            for (std::size_t c = 0; c < row.contributions.size(); ++c) h[r * cols + 7 + c] = row.contributions[c];
        }
        e["metrics.history"] = h;
    }
    return e;
}

TrainState state_from_entries(const std::map<std::string, Tensor>& e) {
    auto get = [&](const std::string& name) -> const Tensor& {
        auto it = e.find(name);
        if (it == e.end()) throw io_error("checkpoint: missing entry '" + name + "'");
        return it->second;
    };
    auto rng = [&](const std::string& name) {
        const Tensor& t = get(name);
        if (t.size() != 4) throw io_error("checkpoint: malformed " + name);
        return RngStream::restore(tensor_u64(t, 0), tensor_u64(t, 2));
    };
    TrainState s;
    const double phase = get("meta.phase")[0];
    if (phase != 0.0 && phase != 1.0) throw io_error("checkpoint: unknown phase");
    s.phase = phase == 0.0 ? Phase::pretrain : Phase::adapt;
    s.epoch = tensor_u64(get("meta.epoch"));
    s.config_hash = tensor_u64(get("meta.config_hash"));
    s.selected_epoch = tensor_u64(get("meta.selected_epoch"));
    s.adam_steps_g = tensor_u64(get("meta.adam_steps_g"));
    s.adam_steps_d = tensor_u64(get("meta.adam_steps_d"));
    s.ppl_mean = get("meta.ppl_mean")[0];
    s.latent = rng("rng.latent");
    s.probe = rng("rng.probe");
    s.data = rng("rng.data");

    ParameterSet* sets[] = {&s.ema, &s.source_g, &s.best_g, &s.adam_m, &s.adam_v};
    for (const auto& [name, t] : e) {
        if (name.rfind("meta.", 0) == 0 || name.rfind("rng.", 0) == 0 || name.rfind("metrics.", 0) == 0) continue;
        if (name.rfind("g.", 0) == 0) {
            s.g[name] = t;
            continue;
        }
        if (name.rfind("d.", 0) == 0) {
            s.d[name] = t;
            continue;
        }
        bool placed = false;
        for (std::size_t i = 0; i < 5 && !placed; ++i)
            if (name.rfind(kPrefixes[i], 0) == 0) {
                (*sets[i])[name.substr(kPrefixes[i].size())] = t;
                placed = true;
            }
        if (!placed) throw io_error("checkpoint: unexpected entry '" + name + "'");
    }

    if (auto it = e.find("meta.config"); it != e.end())
        for (double v : it->second.data()) s.config_text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    if (auto it = e.find("metrics.history"); it != e.end()) {
        const Tensor& h = it->second;
        if (h.rank() != 2 || h.shape()[1] < 7) throw io_error("checkpoint: malformed metrics history");
        const std::size_t cols = h.shape()[1];
        for (std::size_t r = 0; r < h.shape()[0]; ++r) {
            MetricsRow row;
            const double* p = h.data().data() + r * cols;
            row.epoch = static_cast<std::uint64_t>(p[0]);
            row.fid_proxy = p[1];
            row.intra_div = p[2];
            row.path_mean = p[3];
            row.staircase = p[4];
            row.loss_g = p[5];
            row.loss_d = p[6];
            row.contributions.assign(p + 7, p + cols);
            s.history.push_back(std::move(row));
        }
    }
    return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    write_file_atomic(path, encode_checkpoint(state_entries(state)));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    return state_from_entries(decode_checkpoint(read_file(path)));
}

}  // namespace ssga
