#include "s2l/core/serialize.hpp"

namespace s2l {

namespace {

using Shape = std::vector<std::uint64_t>;

template <typename T>
Shape shape_of(const Raster<T>& r) {
    return {static_cast<std::uint64_t>(r.height()), static_cast<std::uint64_t>(r.width()),
            static_cast<std::uint64_t>(r.channels())};
}

template <typename T>
void put_raster(Archive& a, const std::string& name, const Raster<T>& r) {
    a.put<T>(name, shape_of(r), r.values());
}

template <typename T>
Raster<T> get_raster(const Archive& a, const std::string& name) {
    const auto& e = a.require(name);
    if (e.shape.size() != 3) throw ArchiveError("archive: '" + name + "' is not a raster");
    return Raster<T>(static_cast<int>(e.shape[0]), static_cast<int>(e.shape[1]), static_cast<int>(e.shape[2]),
                     a.get<T>(name));
}

Raster<std::uint8_t> label_bytes(const Raster<Label>& labels) {
    std::vector<std::uint8_t> raw(labels.values().size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(labels[i]);
    return Raster<std::uint8_t>(labels.height(), labels.width(), labels.channels(), std::move(raw));
}

Raster<Label> label_raster(const Raster<std::uint8_t>& raw) {
    std::vector<Label> labels(raw.values().size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(raw[i]);
    return Raster<Label>(raw.height(), raw.width(), raw.channels(), std::move(labels));
}

Archive tagged(const char* type) {
    Archive a;
    a.meta()["type"] = type;
    return a;
}

void expect_type(const Archive& a, const char* type) {
    if (!a.meta().contains("type") || a.meta()["type"] != type) {
        throw ArchiveError(std::string("archive: expected a ") + type);
    }
}

}  // namespace

Archive encode(const ImageGrid& value) {
    auto a = tagged("ImageGrid");
    put_raster(a, "pixels", value.pixels());
    return a;
}

Archive encode(const PredictionGrid& value) {
    auto a = tagged("PredictionGrid");
    put_raster(a, "probs", value.raster());
    return a;
}

Archive encode(const ScribbleMap& value) {
    auto a = tagged("ScribbleMap");
    put_raster(a, "flags", value.flags());
    return a;
}

Archive encode(const PseudoLabelMap& value) {
    auto a = tagged("PseudoLabelMap");
    put_raster(a, "labels", label_bytes(value.labels()));
    return a;
}

Archive encode(const DownscaledLabelMap& value) {
    auto a = tagged("DownscaledLabelMap");
    a.meta()["delta"] = value.delta();
    a.meta()["source_height"] = value.source_height();
    a.meta()["source_width"] = value.source_width();
    // Thresholds travel as raw doubles to keep the round trip exact.
    const double nu[2] = {value.nu1(), value.nu2()};
    a.put<double>("nu", std::span<const double>(nu));
    put_raster(a, "labels", label_bytes(value.labels()));
    return a;
}

Archive encode(const FeatureTap& value) {
    auto a = tagged("FeatureTap");
    a.meta()["tap"] = value.tap();
    a.meta()["delta"] = value.delta();
    a.meta()["stage_count"] = value.stage_count();
    put_raster(a, "features", value.features());
    return a;
}

Archive encode(const EmbeddingGrid& value) {
    auto a = tagged("EmbeddingGrid");
    a.meta()["delta"] = value.delta();
    put_raster(a, "embeddings", value.embeddings());
    return a;
}

void decode(const Archive& a, ImageGrid& out) {
    expect_type(a, "ImageGrid");
    out = ImageGrid(get_raster<float>(a, "pixels"));
}

void decode(const Archive& a, PredictionGrid& out) {
    expect_type(a, "PredictionGrid");
    out = PredictionGrid(get_raster<double>(a, "probs"));
}

void decode(const Archive& a, ScribbleMap& out) {
    expect_type(a, "ScribbleMap");
    out = ScribbleMap(get_raster<std::uint8_t>(a, "flags"));
}

void decode(const Archive& a, PseudoLabelMap& out) {
    expect_type(a, "PseudoLabelMap");
    out = PseudoLabelMap(label_raster(get_raster<std::uint8_t>(a, "labels")));
}

void decode(const Archive& a, DownscaledLabelMap& out) {
    expect_type(a, "DownscaledLabelMap");
    const auto nu = a.get<double>("nu");
    if (nu.size() != 2) throw ArchiveError("archive: malformed thresholds");
    out = DownscaledLabelMap(label_raster(get_raster<std::uint8_t>(a, "labels")), a.meta().at("delta").get<int>(),
                             nu[0], nu[1], a.meta().at("source_height").get<int>(),
                             a.meta().at("source_width").get<int>());
}

void decode(const Archive& a, FeatureTap& out) {
    expect_type(a, "FeatureTap");
    out = FeatureTap(get_raster<double>(a, "features"), a.meta().at("tap").get<int>(),
                     a.meta().at("delta").get<int>(), a.meta().at("stage_count").get<int>());
}

void decode(const Archive& a, EmbeddingGrid& out) {
    expect_type(a, "EmbeddingGrid");
    out = EmbeddingGrid(get_raster<double>(a, "embeddings"), a.meta().at("delta").get<int>());
}

}  // namespace s2l
