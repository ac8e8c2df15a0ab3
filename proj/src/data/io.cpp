#include "s2l/data/data.hpp"

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace s2l::data {

namespace fs = std::filesystem;

bool is_lossless_path(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

namespace {

void require_lossless(const fs::path& path) {
    if (!is_lossless_path(path)) {
        throw DataError("raster " + path.string() + ": unsupported format, only lossless PNG/TIFF are accepted");
    }
}

cv::Mat load(const fs::path& path) {
    require_lossless(path);
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("raster " + path.string() + ": unreadable");
    return m;
}

void store(const fs::path& path, const cv::Mat& m) {
    require_lossless(path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m);
    } catch (const cv::Exception& e) {
        throw DataError("raster " + path.string() + ": " + e.what());
    }
    if (!ok) throw DataError("raster " + path.string() + ": write failed");
}

double scale_of(const cv::Mat& m, const fs::path& path) {
    switch (m.depth()) {
        case CV_8U: return 255.0;
        case CV_16U: return 65535.0;
        case CV_32F: return 1.0;
        default: throw DataError("raster " + path.string() + ": unsupported pixel depth");
    }
}

double sample(const cv::Mat& m, int y, int x, int c) {
    switch (m.depth()) {
        case CV_8U: return m.ptr<std::uint8_t>(y)[x * m.channels() + c];
        case CV_16U: return m.ptr<std::uint16_t>(y)[x * m.channels() + c];
        default: return m.ptr<float>(y)[x * m.channels() + c];
    }
}

std::string field(const std::string& s) { return s.empty() ? "-" : s; }

}  // namespace

void write_image(const fs::path& path, const ImageGrid& image) {
    const int c = image.channels();
    if (c != 1 && c != 3) throw DataError("raster " + path.string() + ": images must have 1 or 3 channels");
    cv::Mat m(image.height(), image.width(), CV_16UC(c));
    for (int y = 0; y < image.height(); ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            for (int k = 0; k < c; ++k) {
                // OpenCV keeps colour rasters in BGR order
                const int src = c == 3 ? 2 - k : k;
                const double v = std::clamp(static_cast<double>(image(y, x, src)), 0.0, 1.0);
                row[x * c + k] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
            }
        }
    }
    store(path, m);
}

ImageGrid read_image(const fs::path& path, int channels) {
    if (channels != 1 && channels != 3) throw DataError("image channels must be 1 or 3");
    const cv::Mat m = load(path);
    const double scale = scale_of(m, path);
    const int have = m.channels();
    if (have != 1 && have != 3 && have != 4) throw DataError("raster " + path.string() + ": unsupported channel count");
    Raster<float> out(m.rows, m.cols, channels);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            double rgb[3];
            if (have == 1) {
                rgb[0] = rgb[1] = rgb[2] = sample(m, y, x, 0) / scale;
            } else {
                for (int k = 0; k < 3; ++k) rgb[k] = sample(m, y, x, 2 - k) / scale;
            }
            if (channels == 1) {
                const double g = have == 1 ? rgb[0] : 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
                out(y, x) = static_cast<float>(std::clamp(g, 0.0, 1.0));
            } else {
                for (int k = 0; k < 3; ++k) out(y, x, k) = static_cast<float>(std::clamp(rgb[k], 0.0, 1.0));
            }
        }
    }
    return ImageGrid(std::move(out));
}

void write_mask(const fs::path& path, const InstanceMap& mask) {
    if (mask.count() > 65535) throw DataError("mask " + path.string() + ": more than 65535 instances");
    cv::Mat m(mask.height(), mask.width(), CV_16UC1);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(mask(y, x));
    }
    store(path, m);
}

InstanceMap read_mask(const fs::path& path) {
    const cv::Mat m = load(path);
    if (m.channels() != 1 || (m.depth() != CV_8U && m.depth() != CV_16U)) {
        throw DataError("mask " + path.string() + ": expected a single-channel 8/16-bit id raster");
    }
    std::vector<std::uint32_t> ids(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) ids[static_cast<std::size_t>(y) * m.cols + x] = static_cast<std::uint32_t>(sample(m, y, x, 0));
    }
    std::map<std::uint32_t, std::uint32_t> relabel;
    for (auto v : ids) {
        if (v) relabel.emplace(v, 0);
    }
    std::uint32_t next = 0;
    for (auto& [from, to] : relabel) to = ++next;
    for (auto& v : ids) {
        if (v) v = relabel[v];
    }
    return InstanceMap(Raster<std::uint32_t>(m.rows, m.cols, 1, std::move(ids)));
}

void write_scribbles(const fs::path& path, const ScribbleMap& s) {
    cv::Mat m(s.height(), s.width(), CV_8UC1, cv::Scalar(0));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool fg = s.is_foreground(i), bg = s.is_background(i);
        if (fg && bg) throw DataError("scribbles " + path.string() + ": pixel on both stroke classes");
        m.data[i] = fg ? 2 : bg ? 1 : 0;
    }
    store(path, m);
}

ScribbleMap read_scribbles(const fs::path& path) {
    const cv::Mat m = load(path);
    if (m.channels() != 1 || m.depth() != CV_8U) throw DataError("scribbles " + path.string() + ": expected 8-bit single channel");
    std::vector<std::size_t> fg, bg;
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            const auto v = m.at<std::uint8_t>(y, x);
            const auto i = static_cast<std::size_t>(y) * m.cols + x;
            if (v == 2) fg.push_back(i);
            else if (v == 1) bg.push_back(i);
            else if (v != 0) throw DataError("scribbles " + path.string() + ": value " + std::to_string(v) + " outside {0,1,2}");
        }
    }
    return ScribbleMap(m.rows, m.cols, fg, bg);
}

void write_gray8(const fs::path& path, const Raster<std::uint8_t>& raster) {
    if (raster.channels() != 1) throw DataError("raster " + path.string() + ": expected a single channel");
    cv::Mat m(raster.height(), raster.width(), CV_8UC1);
    std::copy(raster.values().begin(), raster.values().end(), m.data);
    store(path, m);
}

Raster<std::uint8_t> read_gray8(const fs::path& path) {
    const cv::Mat m = load(path);
    if (m.channels() != 1 || m.depth() != CV_8U) throw DataError("raster " + path.string() + ": expected 8-bit single channel");
    Raster<std::uint8_t> out(m.rows, m.cols, 1);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) out(y, x) = m.at<std::uint8_t>(y, x);
    }
    return out;
}

fs::path DatasetManifest::resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : root / path;
}

std::vector<std::size_t> DatasetManifest::indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == split) out.push_back(i);
    }
    return out;
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest " + path.string() + ": cannot open");
    DatasetManifest out;
    out.root = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c == "-" ? "" : c);
        if (cols.size() != 4 || cols[0].empty()) {
            throw DataError(fmt::format("manifest {}:{}: expected 4 tab-separated fields (image, mask, scribble, split)",
                                        path.string(), line_no));
        }
        out.records.push_back({cols[0], cols[1], cols[2], cols[3]});
    }
    return out;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("manifest " + path.string() + ": cannot write");
    out << "# image\tmask\tscribble\tsplit\n";
    for (const auto& r : manifest.records) {
        out << r.image << '\t' << field(r.mask) << '\t' << field(r.scribble) << '\t' << field(r.split) << '\n';
    }
}

std::vector<std::string> validate(const DatasetManifest& manifest) {
    std::vector<std::string> out;
    for (const auto& r : manifest.records) {
        for (const auto* p : {&r.image, &r.mask, &r.scribble}) {
            if (!p->empty() && !fs::exists(manifest.resolve(*p))) out.push_back("missing file " + manifest.resolve(*p).string());
        }
        if (r.split == "train" && r.mask.empty() && r.scribble.empty()) {
            out.push_back("training record " + r.image + " has neither scribble nor mask");
        }
    }
    return out;
}

std::vector<Sample> load_dataset(const DatasetManifest& manifest, const LoadOptions& options) {
    if (const auto bad = validate(manifest); !bad.empty()) throw DataError("manifest: " + bad.front());
    std::vector<Sample> out;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (!options.split.empty() && r.split != options.split) continue;
        Sample s;
        s.id = fs::path(r.image).stem().string();
        s.split = r.split;
        s.image = read_image(manifest.resolve(r.image), options.channels);
        const auto shape_check = [&](int h, int w, const std::string& what) {
            if (h != s.image.height() || w != s.image.width()) {
                throw DataError(fmt::format("record {}: {} is {}x{} but the image is {}x{}", r.image, what, h, w,
                                            s.image.height(), s.image.width()));
            }
        };
        if (!r.mask.empty()) {
            s.mask = read_mask(manifest.resolve(r.mask));
            shape_check(s.mask->height(), s.mask->width(), "mask");
        }
        if (!r.scribble.empty()) {
            s.scribbles = read_scribbles(manifest.resolve(r.scribble));
            shape_check(s.scribbles.height(), s.scribbles.width(), "scribble");
        } else if (s.mask) {
            auto cfg = options.scribbles;
            cfg.seed += i;
            s.scribbles = synthesize_scribbles(*s.mask, cfg);
        } else {
            s.scribbles = ScribbleMap(s.image.height(), s.image.width(), {}, {});
        }
        out.push_back(std::move(s));
    }
    return out;
}

DatasetManifest save_dataset(const fs::path& dir, const std::vector<SyntheticSample>& samples,
                             const std::vector<ScribbleMap>& scribbles, const std::vector<std::string>& splits) {
    if (scribbles.size() != samples.size() || splits.size() != samples.size()) {
        throw DataError("save_dataset: samples, scribbles and splits differ in length");
    }
    DatasetManifest m;
    m.root = dir;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto id = fmt::format("{:04d}", i);
        Record r{id + "_image.png", id + "_mask.png", id + "_scribble.png", splits[i]};
        write_image(dir / r.image, samples[i].image);
        write_mask(dir / r.mask, samples[i].mask);
        write_scribbles(dir / r.scribble, scribbles[i]);
        m.records.push_back(std::move(r));
    }
    write_manifest(dir / "manifest.tsv", m);
    return m;
}

std::vector<Fold> split_folds(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw DataError("split_folds: k must be at least 2");
    if (static_cast<std::size_t>(k) > n) {
        throw DataError(fmt::format("split_folds: k = {} exceeds the {} records", k, n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (std::size_t p = 0; p < n; ++p) folds[p % k].val.push_back(order[p]);
    for (std::size_t j = 0; j < folds.size(); ++j) {
        std::sort(folds[j].val.begin(), folds[j].val.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::binary_search(folds[j].val.begin(), folds[j].val.end(), i)) folds[j].train.push_back(i);
        }
    }
    return folds;
}

std::vector<Fold> split_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    return split_folds(manifest.records.size(), k, seed);
}

}  // namespace s2l::data
