#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hflight {

// One named contiguous slice of the flat parameter vector.
struct LayerView {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const LayerView&) const = default;
};

// Flat model parameter vector with named-layer views. Values are held in
// double for stable arithmetic; the wire format is IEEE-754 single
// precision (see serialize/deserialize), which is what all byte
// accounting measures.
class ParamVector {
public:
    ParamVector() = default;
    ParamVector(std::vector<double> values, std::vector<LayerView> layout);

    // All-zeros vector with the given layout.
    static ParamVector zeros(std::vector<LayerView> layout);

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    const std::vector<LayerView>& layout() const { return layout_; }
    std::size_t size() const { return values_.size(); }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }

    // Throws if layouts disagree or values are non-finite.
    void check_compatible(const ParamVector& other) const;

    bool operator==(const ParamVector&) const = default;

private:
    std::vector<double> values_;
    std::vector<LayerView> layout_;
};

// Wire format: layout header followed by little-endian float32 payload.
//   u32 layer_count
//   per layer: u16 name_len, name bytes, u64 offset, u64 length
//   u64 value_count
//   float32 x value_count  (little endian)
std::vector<std::uint8_t> serialize(const ParamVector& p);
ParamVector deserialize(const std::uint8_t* data, std::size_t len);
ParamVector deserialize(const std::vector<std::uint8_t>& bytes);

// Payload portion only: 4 bytes per parameter.
std::size_t payload_bytes(const ParamVector& p);
// Header portion: everything before the float payload.
std::size_t header_bytes(const ParamVector& p);

// Round every value to its float32 representation, exactly what a
// serialize/deserialize round trip produces. Every parameter exchange
// goes through this, so thread- and process-mode runs see identical bits.
ParamVector quantize(const ParamVector& p);

}  // namespace hflight
