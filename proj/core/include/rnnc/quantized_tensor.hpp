#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rnnc {

// 8-bit linearly quantized tensor: each code addresses one of 256 equal
// intervals spanning [min, min + 255 * scale]. min and scale are kept at
// 32-bit precision, matching the serialized form, so dequantization is
// reproducible bit for bit.
struct QuantizedTensor {
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> codes;
    float min = 0.0f;
    float scale = 0.0f;

    std::size_t size() const { return codes.size(); }
};

}  // namespace rnnc
