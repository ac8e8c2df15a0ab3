#pragma once

#include "s2l/core/types.hpp"
#include "s2l/metrics/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l::data {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using metrics::InstanceMap;

// Blob images: bright elliptical nuclei on a shaded background, plus
// distractor streaks drawn from the nucleus intensity range.
struct SynthConfig {
    int height = 128;
    int width = 128;
    int min_blobs = 4;
    int max_blobs = 12;
    double min_radius = 5.0;
    double max_radius = 10.0;
    int blob_gap = 2;
    double fg_low = 0.55;
    double fg_high = 0.95;
    double bg_low = 0.05;
    double bg_high = 0.30;
    // expected distractors per 10^4 pixels
    double distractor_density = 2.0;
    // per-pixel noise, truncated at 2.5 sigma
    double noise_sigma = 0.04;
    // image sides must be multiples of this (network downsampling factor)
    int size_multiple = 16;
    std::uint64_t seed = 0;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

std::vector<std::string> validate(const SynthConfig& cfg);

struct SyntheticSample {
    ImageGrid image;
    InstanceMap mask;
};

// Deterministic in (cfg.seed, image index).
std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg, int n_images);

struct ScribbleConfig {
    int stroke_width = 1;
    // scribbled pixels / all pixels
    double coverage = 0.01;
    std::uint64_t seed = 0;

    friend bool operator==(const ScribbleConfig&, const ScribbleConfig&) = default;
};

std::vector<std::string> validate(const ScribbleConfig& cfg);

// One straight foreground stroke inside the eroded interior of every
// instance, then background strokes until the coverage target is met.
ScribbleMap synthesize_scribbles(const InstanceMap& mask, const ScribbleConfig& cfg);

// Lossless rasters only (.png, .tif, .tiff).
bool is_lossless_path(const std::filesystem::path& path);

// 16-bit grayscale or RGB.
void write_image(const std::filesystem::path& path, const ImageGrid& image);
// Normalized to [0,1]; 8/16-bit gray, RGB, RGBA accepted and converted to `channels` (1 or 3).
ImageGrid read_image(const std::filesystem::path& path, int channels = 1);
// 16-bit ids.
void write_mask(const std::filesystem::path& path, const InstanceMap& mask);
// Ids relabeled contiguously in ascending order.
InstanceMap read_mask(const std::filesystem::path& path);
// 8-bit: 0 = unlabeled, 1 = background stroke, 2 = foreground stroke.
void write_scribbles(const std::filesystem::path& path, const ScribbleMap& scribbles);
ScribbleMap read_scribbles(const std::filesystem::path& path);
// Plain 8-bit single channel, values as given.
void write_gray8(const std::filesystem::path& path, const Raster<std::uint8_t>& raster);
Raster<std::uint8_t> read_gray8(const std::filesystem::path& path);

struct Record {
    std::string image;
    std::string mask;      // empty when absent
    std::string scribble;  // empty when absent
    std::string split;

    friend bool operator==(const Record&, const Record&) = default;
};

// Paths are relative to `root` unless absolute.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<Record> records;

    std::filesystem::path resolve(const std::string& p) const;
    std::vector<std::size_t> indices(const std::string& split) const;
};

// Tab-separated lines: image, mask, scribble, split; "-" marks an absent path.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
// Missing files and records without any supervision, empty when valid.
std::vector<std::string> validate(const DatasetManifest& manifest);

struct Sample {
    std::string id;
    std::string split;
    ImageGrid image;
    ScribbleMap scribbles;
    std::optional<InstanceMap> mask;
};

struct LoadOptions {
    int channels = 1;
    // used for records that have a mask but no scribble file
    ScribbleConfig scribbles;
    // empty = all records
    std::string split;
};

std::vector<Sample> load_dataset(const DatasetManifest& manifest, const LoadOptions& options = {});

// Writes image/mask/scribble triples as <dir>/<id>_{image,mask,scribble}.png and
// a manifest at <dir>/manifest.tsv; split[i] tags sample i.
DatasetManifest save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                             const std::vector<ScribbleMap>& scribbles, const std::vector<std::string>& splits);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

// k disjoint validation folds covering 0..n-1; fold sizes differ by at most one.
std::vector<Fold> split_folds(std::size_t n_records, int k, std::uint64_t seed);
std::vector<Fold> split_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

}  // namespace s2l::data
