#pragma once

#include "s2l/core/archive.hpp"
#include "s2l/core/loss_config.hpp"
#include "s2l/core/types.hpp"

#include <string>
#include <string_view>

namespace s2l {

// Archive encodings of the core types. decode() checks the "type" tag and
// throws ArchiveError on mismatch.
Archive encode(const ImageGrid& value);
Archive encode(const PredictionGrid& value);
Archive encode(const ScribbleMap& value);
Archive encode(const PseudoLabelMap& value);
Archive encode(const DownscaledLabelMap& value);
Archive encode(const FeatureTap& value);
Archive encode(const EmbeddingGrid& value);

void decode(const Archive& archive, ImageGrid& out);
void decode(const Archive& archive, PredictionGrid& out);
void decode(const Archive& archive, ScribbleMap& out);
void decode(const Archive& archive, PseudoLabelMap& out);
void decode(const Archive& archive, DownscaledLabelMap& out);
void decode(const Archive& archive, FeatureTap& out);
void decode(const Archive& archive, EmbeddingGrid& out);

template <typename T>
std::string serialize(const T& value) {
    return encode(value).to_bytes();
}

template <typename T>
T deserialize(std::string_view bytes) {
    T out;
    decode(Archive::from_bytes(bytes), out);
    return out;
}

}  // namespace s2l
