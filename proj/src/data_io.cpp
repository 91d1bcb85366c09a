#include "mow/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "mow/errors.hpp"

namespace mow {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw IoError("truncated IDX header in " + path);
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
           uint32_t(buf[3]);
}

void write_be_u32(std::ostream& out, uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(buf), 4);
}

Dataset make_gauss_mix(int size, const SyntheticParams& p, Rng& rng) {
    if (p.components < 1) throw ConfigError("gauss_mix: components must be positive");
    if (p.variance < 0.0) throw ConfigError("gauss_mix: variance must be non-negative");
    const double sigma = std::sqrt(p.variance);
    Matrix centers(p.components, 2);
    for (int c = 0; c < p.components; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / p.components;
        centers(c, 0) = p.center_radius * std::cos(angle);
        centers(c, 1) = p.center_radius * std::sin(angle);
    }
    Dataset d;
    d.name = "gauss_mix";
    d.examples.resize(size, 2);
    for (int i = 0; i < size; ++i) {
        const auto c = static_cast<Eigen::Index>(rng.next_below(static_cast<uint64_t>(p.components)));
        d.examples(i, 0) = centers(c, 0) + sigma * rng.next_gaussian();
        d.examples(i, 1) = centers(c, 1) + sigma * rng.next_gaussian();
    }
    d.lo = d.examples.minCoeff();
    d.hi = d.examples.maxCoeff();
    return d;
}

Dataset make_ring(int size, const SyntheticParams& p, Rng& rng) {
    if (p.noise < 0.0) throw ConfigError("ring: noise must be non-negative");
    Dataset d;
    d.name = "ring";
    d.examples.resize(size, 2);
    for (int i = 0; i < size; ++i) {
        const double angle = 2.0 * std::numbers::pi * rng.next_unit();
        d.examples(i, 0) = std::cos(angle) + p.noise * rng.next_gaussian();
        d.examples(i, 1) = std::sin(angle) + p.noise * rng.next_gaussian();
    }
    d.lo = d.examples.minCoeff();
    d.hi = d.examples.maxCoeff();
    return d;
}

// 8x8 Gaussian blobs, one per image, values in [0,1].
Dataset make_grid_images(int size, Rng& rng) {
    constexpr int kSide = 8;
    Dataset d;
    d.name = "grid_images";
    d.examples.resize(size, kSide * kSide);
    for (int i = 0; i < size; ++i) {
        const double cx = 1.0 + 5.0 * rng.next_unit();
        const double cy = 1.0 + 5.0 * rng.next_unit();
        const double w = 0.7 + 1.3 * rng.next_unit();
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x) {
                const double dx = x - cx, dy = y - cy;
                d.examples(i, y * kSide + x) = std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
            }
    }
    d.lo = 0.0;
    d.hi = 1.0;
    return d;
}

}  // namespace

Dataset make_synthetic(SyntheticKind kind, int size, const SyntheticParams& params,
                       uint64_t seed) {
    if (size < 1) throw ConfigError("make_synthetic: size must be positive");
    Rng rng = Rng::derive(seed, 0xDA7Aull);
    switch (kind) {
        case SyntheticKind::gauss_mix: return make_gauss_mix(size, params, rng);
        case SyntheticKind::ring: return make_ring(size, params, rng);
        case SyntheticKind::grid_images: return make_grid_images(size, rng);
    }
    throw ConfigError("make_synthetic: unknown kind");
}

Dataset load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file " + path);
    const uint32_t magic = read_be_u32(in, path);
    if (magic == kIdxLabelsMagic)
        throw IoError(path + ": IDX label file (magic 0x00000801) holds no examples");
    if (magic != kIdxImagesMagic) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08X", magic);
        throw IoError(path + ": bad IDX magic " + buf);
    }
    const uint64_t count = read_be_u32(in, path);
    const uint64_t rows = read_be_u32(in, path);
    const uint64_t cols = read_be_u32(in, path);
    if (count == 0 || rows == 0 || cols == 0)
        throw IoError(path + ": zero-sized IDX dimensions");
    const uint64_t pixels = rows * cols;
    if (pixels > (1ull << 24) || count > (1ull << 32) || count * pixels > (1ull << 33))
        throw IoError(path + ": IDX dimensions overflow sane limits");

    std::vector<unsigned char> payload(count * pixels);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    const auto got = static_cast<uint64_t>(in.gcount());
    if (got != payload.size())
        throw IoError(path + ": truncated IDX payload, expected " +
                      std::to_string(payload.size()) + " bytes, got " + std::to_string(got));

    Dataset d;
    d.name = path;
    d.examples.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
    for (uint64_t i = 0; i < count; ++i)
        for (uint64_t j = 0; j < pixels; ++j)
            d.examples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                payload[i * pixels + j] / 255.0;
    d.lo = 0.0;
    d.hi = 1.0;
    return d;
}

void write_idx(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write IDX file " + path);
    write_be_u32(out, kIdxImagesMagic);
    write_be_u32(out, static_cast<uint32_t>(data.count()));
    write_be_u32(out, 1);
    write_be_u32(out, static_cast<uint32_t>(data.dim()));
    std::vector<unsigned char> payload(static_cast<std::size_t>(data.count() * data.dim()));
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < data.count(); ++i)
        for (Eigen::Index j = 0; j < data.dim(); ++j) {
            const double q = std::round(std::clamp(data.examples(i, j), 0.0, 1.0) * 255.0);
            payload[at++] = static_cast<unsigned char>(q);
        }
    out.write(reinterpret_cast<char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write to " + path);
}

DataQueue::Draw DataQueue::next(int count) {
    if (count < 1) throw ConfigError("DataQueue::next: count must be positive");
    Draw d;
    d.rows.resize(count, data_->dim());
    d.indices.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto idx = static_cast<Eigen::Index>(
            rng_.next_below(static_cast<uint64_t>(data_->count())));
        d.rows.row(i) = data_->examples.row(idx);
        d.indices[static_cast<std::size_t>(i)] = idx;
    }
    draws_served_ += count;
    return d;
}

}  // namespace mow
