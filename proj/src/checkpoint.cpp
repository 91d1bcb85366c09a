#include "mow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mow/errors.hpp"

namespace mow {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'W', '1'};

// section tags
constexpr uint32_t kSecNet = 0x5354454Eu;     // "NETS"
constexpr uint32_t kSecConfig = 0x4746434Du;  // "MCFG"
constexpr uint32_t kSecState = 0x54415453u;   // "STAT"
constexpr uint32_t kSecQueue = 0x55455551u;   // "QUEU"
constexpr uint32_t kSecDigest = 0x45474944u;  // "DIGE"

struct Writer {
    std::string buf;
    void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf.append(s);
    }
    void vec(const Vector& v) {
        u64(static_cast<uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
    }
};

struct Reader {
    const std::string* buf;
    std::size_t at = 0;
    const std::string* path;

    void need(std::size_t n) const {
        if (at + n > buf->size())
            throw IoError(*path + ": truncated checkpoint section");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>((*buf)[at++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>((*buf)[at++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>((*buf)[at++])) << (8 * i);
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s = buf->substr(at, n);
        at += n;
        return s;
    }
    Vector vec() {
        const uint64_t n = u64();
        need(n * 8);
        Vector v(static_cast<Eigen::Index>(n));
        for (uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = f64();
        return v;
    }
};

void write_net(Writer& w, const NetSpec& net) {
    w.i32(net.input_dim);
    w.i32(net.latent_dim);
    w.u8(static_cast<uint8_t>(net.output_activation));
    auto layers = [&](const std::vector<LayerSpec>& ls) {
        w.u32(static_cast<uint32_t>(ls.size()));
        for (const auto& l : ls) {
            w.i32(l.width);
            w.u8(static_cast<uint8_t>(l.act));
        }
    };
    layers(net.encoder_layers);
    layers(net.decoder_layers);
}

NetSpec read_net(Reader& r) {
    NetSpec net;
    net.input_dim = r.i32();
    net.latent_dim = r.i32();
    net.output_activation = static_cast<Activation>(r.u8());
    auto layers = [&]() {
        std::vector<LayerSpec> ls(r.u32());
        for (auto& l : ls) {
            l.width = r.i32();
            l.act = static_cast<Activation>(r.u8());
        }
        return ls;
    };
    net.encoder_layers = layers();
    net.decoder_layers = layers();
    return net;
}

void write_config(Writer& w, const MowConfig& cfg) {
    w.i32(cfg.n);
    w.i32(cfg.k);
    w.f64(cfg.eta);
    w.f64(cfg.lambda);
    w.u8(static_cast<uint8_t>(cfg.distance.kind));
    w.f64(cfg.distance.kernel_scale);
    w.f64(cfg.distance.gamma);
    w.i32(cfg.distance.n_directions);
    w.u8(static_cast<uint8_t>(cfg.rule));
    w.f64(cfg.adam.beta1);
    w.f64(cfg.adam.beta2);
    w.f64(cfg.adam.eps);
    w.u8(static_cast<uint8_t>(cfg.recon_reduction));
    w.u8(static_cast<uint8_t>(cfg.selection));
    w.i64(cfg.steps);
    w.u64(cfg.seed);
}

MowConfig read_config(Reader& r) {
    MowConfig cfg;
    cfg.n = r.i32();
    cfg.k = r.i32();
    cfg.eta = r.f64();
    cfg.lambda = r.f64();
    cfg.distance.kind = static_cast<DistanceKind>(r.u8());
    cfg.distance.kernel_scale = r.f64();
    cfg.distance.gamma = r.f64();
    cfg.distance.n_directions = r.i32();
    cfg.rule = static_cast<UpdateRule>(r.u8());
    cfg.adam.beta1 = r.f64();
    cfg.adam.beta2 = r.f64();
    cfg.adam.eps = r.f64();
    cfg.recon_reduction = static_cast<ReconReduction>(r.u8());
    cfg.selection = static_cast<SelectionMetric>(r.u8());
    cfg.steps = r.i64();
    cfg.seed = r.u64();
    return cfg;
}

void write_state(Writer& w, const MowState& st) {
    w.u32(static_cast<uint32_t>(st.theta.segments().size()));
    for (const auto& seg : st.theta.segments()) {
        w.str(seg.name);
        w.i64(seg.rows);
        w.i64(seg.cols);
    }
    w.vec(st.theta.values);
    const auto slots = st.buffer.ordered_slots();
    w.i32(st.buffer.capacity());
    w.u32(static_cast<uint32_t>(slots.size()));
    for (const auto& s : slots) {
        w.vec(s.z);
        w.i64(s.example_index);
        w.i64(s.generation);
    }
    w.i64(st.l);
    w.u8(st.moments.empty() ? 0 : 1);
    if (!st.moments.empty()) {
        w.i64(st.moments.t);
        w.vec(st.moments.m);
        w.vec(st.moments.v);
    }
    w.u64(st.rng.seed());
    w.u64(st.rng.counter());
}

MowState read_state(Reader& r, const std::string& path) {
    MowState st;
    const uint32_t nseg = r.u32();
    std::vector<std::tuple<std::string, int64_t, int64_t>> segs;
    for (uint32_t i = 0; i < nseg; ++i) {
        std::string name = r.str();
        const int64_t rows = r.i64();
        const int64_t cols = r.i64();
        segs.emplace_back(std::move(name), rows, cols);
    }
    Vector values = r.vec();
    for (auto& [name, rows, cols] : segs) st.theta.add(name, rows, cols);
    if (st.theta.size() != values.size())
        throw IoError(path + ": parameter payload does not match segment table");
    st.theta.values = std::move(values);

    const int capacity = r.i32();
    const uint32_t nslots = r.u32();
    std::vector<LatentBuffer::Slot> slots(nslots);
    for (auto& s : slots) {
        s.z = r.vec();
        s.example_index = r.i64();
        s.generation = r.i64();
    }
    st.buffer.assign_ordered(std::move(slots), capacity);
    st.l = r.i64();
    if (r.u8() != 0) {
        st.moments.t = r.i64();
        st.moments.m = r.vec();
        st.moments.v = r.vec();
    }
    const uint64_t seed = r.u64();
    const uint64_t counter = r.u64();
    st.rng = Rng(seed, counter);
    return st;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 4);
    {
        Writer head;
        head.u32(kCheckpointVersion);
        out += head.buf;
    }
    auto section = [&](uint32_t tag, const std::string& payload) {
        Writer head;
        head.u32(tag);
        head.u64(payload.size());
        out += head.buf;
        out += payload;
    };
    {
        Writer w;
        write_net(w, ck.net);
        section(kSecNet, w.buf);
    }
    {
        Writer w;
        write_config(w, ck.mow);
        section(kSecConfig, w.buf);
    }
    {
        Writer w;
        write_state(w, ck.state);
        section(kSecState, w.buf);
    }
    {
        Writer w;
        w.u64(ck.queue_rng.seed());
        w.u64(ck.queue_rng.counter());
        w.i64(ck.queue_draws);
        section(kSecQueue, w.buf);
    }
    {
        Writer w;
        w.u64(ck.config_digest);
        section(kSecDigest, w.buf);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string data = ss.str();
    if (data.size() < 8 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw IoError(path + ": not a MOW1 checkpoint");
    Reader head{&data, 4, &path};
    const uint32_t version = head.u32();
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));

    std::map<uint32_t, std::string> sections;
    std::size_t at = head.at;
    while (at < data.size()) {
        Reader r{&data, at, &path};
        const uint32_t tag = r.u32();
        const uint64_t len = r.u64();
        r.need(len);
        sections[tag] = data.substr(r.at, len);
        at = r.at + len;
    }
    for (uint32_t tag : {kSecNet, kSecConfig, kSecState, kSecQueue, kSecDigest})
        if (!sections.count(tag)) throw IoError(path + ": missing checkpoint section");

    Checkpoint ck;
    {
        Reader r{&sections[kSecNet], 0, &path};
        ck.net = read_net(r);
    }
    {
        Reader r{&sections[kSecConfig], 0, &path};
        ck.mow = read_config(r);
    }
    {
        Reader r{&sections[kSecState], 0, &path};
        ck.state = read_state(r, path);
    }
    {
        Reader r{&sections[kSecQueue], 0, &path};
        const uint64_t seed = r.u64();
        const uint64_t counter = r.u64();
        ck.queue_rng = Rng(seed, counter);
        ck.queue_draws = r.i64();
    }
    {
        Reader r{&sections[kSecDigest], 0, &path};
        ck.config_digest = r.u64();
    }
    return ck;
}

}  // namespace mow
