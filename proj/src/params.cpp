#include "hflight/params.hpp"

#include <cmath>
#include <cstring>

#include "hflight/errors.hpp"

namespace hflight {

namespace {

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::uint8_t* p;
    std::size_t left;

    void need(std::size_t n) const {
        if (left < n) throw ParseError("truncated ParamVector buffer");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        left -= 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
    float f32() {
        need(4);
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

void validate_layout(const std::vector<double>& values, const std::vector<LayerView>& layout) {
    std::size_t total = 0;
    for (const auto& lv : layout) total += lv.length;
    if (total != values.size())
        throw DimensionError("layout lengths sum to " + std::to_string(total) + " but vector has " +
                             std::to_string(values.size()) + " values");
    for (double v : values)
        if (!std::isfinite(v)) throw DimensionError("non-finite parameter value");
}

}  // namespace

ParamVector::ParamVector(std::vector<double> values, std::vector<LayerView> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
    validate_layout(values_, layout_);
}

ParamVector ParamVector::zeros(std::vector<LayerView> layout) {
    std::size_t total = 0;
    for (const auto& lv : layout) total += lv.length;
    return ParamVector(std::vector<double>(total, 0.0), std::move(layout));
}

void ParamVector::check_compatible(const ParamVector& other) const {
    if (!same_layout(other)) throw DimensionError("ParamVector layout mismatch");
}

std::vector<std::uint8_t> serialize(const ParamVector& p) {
    std::vector<std::uint8_t> out;
    out.reserve(header_bytes(p) + payload_bytes(p));
    append_u32(out, static_cast<std::uint32_t>(p.layout().size()));
    for (const auto& lv : p.layout()) {
        append_u16(out, static_cast<std::uint16_t>(lv.name.size()));
        out.insert(out.end(), lv.name.begin(), lv.name.end());
        append_u64(out, lv.offset);
        append_u64(out, lv.length);
    }
    append_u64(out, p.size());
    for (double v : p.values()) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
    return out;
}

ParamVector deserialize(const std::uint8_t* data, std::size_t len) {
    Reader r{data, len};
    std::uint32_t layers = r.u32();
    std::vector<LayerView> layout;
    layout.reserve(layers);
    for (std::uint32_t i = 0; i < layers; ++i) {
        std::uint16_t name_len = r.u16();
        LayerView lv;
        lv.name = r.str(name_len);
        lv.offset = r.u64();
        lv.length = r.u64();
        layout.push_back(std::move(lv));
    }
    std::uint64_t count = r.u64();
    std::vector<double> values;
    values.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) values.push_back(static_cast<double>(r.f32()));
    if (r.left != 0) throw ParseError("trailing bytes after ParamVector payload");
    return ParamVector(std::move(values), std::move(layout));
}

ParamVector deserialize(const std::vector<std::uint8_t>& bytes) {
    return deserialize(bytes.data(), bytes.size());
}

std::size_t payload_bytes(const ParamVector& p) { return 4 * p.size(); }

std::size_t header_bytes(const ParamVector& p) {
    std::size_t h = 4;  // layer count
    for (const auto& lv : p.layout()) h += 2 + lv.name.size() + 16;
    h += 8;  // value count
    return h;
}

ParamVector quantize(const ParamVector& p) {
    std::vector<double> q;
    q.reserve(p.size());
    for (double v : p.values()) q.push_back(static_cast<double>(static_cast<float>(v)));
    return ParamVector(std::move(q), p.layout());
}

}  // namespace hflight
