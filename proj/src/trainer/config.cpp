#include "s2l/trainer/config.hpp"

#include "s2l/core/validate.hpp"

#include <fmt/format.h>

#include <set>

namespace s2l::trainer {

using nlohmann::json;

std::vector<std::string> validate(const TrainConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.warmup_epochs < 1 || cfg.main_epochs < 1) out.emplace_back("epochs >= 1");
    if (cfg.filter.refresh_period > cfg.main_epochs) out.emplace_back("refresh period <= main epochs");
    if (cfg.batch_size < 1) out.emplace_back("batch_size >= 1");
    if (cfg.eval_batch_size < 1) out.emplace_back("eval_batch_size >= 1");
    if (cfg.checkpoint_every < 1) out.emplace_back("checkpoint_every >= 1");
    if (cfg.ema_start_epoch < 1) out.emplace_back("ema_start_epoch >= 1");
    if (cfg.device != "cpu") out.emplace_back("device is cpu");
    if (cfg.projection_dim < 1 || cfg.projection_depth < 1) out.emplace_back("projection head size");
    if (!(cfg.optimizer.lr > 0 && cfg.optimizer.beta1 >= 0 && cfg.optimizer.beta1 < 1 && cfg.optimizer.beta2 >= 0 &&
          cfg.optimizer.beta2 < 1 && cfg.optimizer.eps > 0)) {
        out.emplace_back("optimizer settings");
    }
    for (auto& e : pseudolabel::validate(cfg.filter)) out.push_back(std::move(e));
    for (auto& e : model::validate(cfg.network)) out.push_back(std::move(e));
    for (auto& e : s2l::validate(cfg.loss)) out.push_back(std::move(e));
    if (model::validate(cfg.network).empty()) {
        const int multiple = 1 << (cfg.network.depth - 1);
        if (cfg.crop_size < 1 || cfg.crop_size % multiple != 0) out.emplace_back("crop_size multiple of network downsampling factor");
        for (const auto& s : cfg.loss.scales) {
            if (s.tap < 1 || s.tap > cfg.network.depth || s.delta != 1 << (cfg.network.depth - s.tap)) {
                out.emplace_back("scale tap matches delta");
                break;
            }
        }
    }
    return out;
}

json to_json(const TrainConfig& c) {
    json scales = json::array();
    for (const auto& s : c.loss.scales) scales.push_back({{"tap", s.tap}, {"delta", s.delta}, {"tau", s.tau}, {"weight", s.weight}});
    return {
        {"warmup_epochs", c.warmup_epochs},
        {"main_epochs", c.main_epochs},
        {"batch_size", c.batch_size},
        {"crop_size", c.crop_size},
        {"eval_batch_size", c.eval_batch_size},
        {"ema_start_epoch", c.ema_start_epoch},
        {"checkpoint_every", c.checkpoint_every},
        {"seed", c.seed},
        {"device", c.device},
        {"optimizer", {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps}}},
        {"filter", {{"momentum", c.filter.momentum}, {"threshold", c.filter.threshold}, {"refresh_period", c.filter.refresh_period}}},
        {"loss",
         {{"alpha", c.loss.alpha},
          {"nu1", c.loss.nu1},
          {"nu2", c.loss.nu2},
          {"sample_cap", c.loss.sample_cap},
          {"pair_op", std::string(to_string(c.loss.pair_op))},
          {"scales", scales}}},
        {"network",
         {{"widths", c.network.widths},
          {"depth", c.network.depth},
          {"in_channels", c.network.in_channels},
          {"convs_per_block", c.network.convs_per_block}}},
        {"projection", {{"dim", c.projection_dim}, {"depth", c.projection_depth}}},
        {"augment", {{"flips", c.augment.flips}, {"rotations", c.augment.rotations}}},
    };
}

namespace {

// Reads one JSON object, remembering which keys were consumed.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(fmt::format("config key '{}': expected an object", where()));
    }

    template <typename T>
    void read(const char* key, T& out) {
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        seen_.insert(key);
        const auto name = full(key);
        const json& v = *it;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("config key '" + name + "': expected true or false");
            out = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
            if (!v.is_number_unsigned()) throw ConfigError("config key '" + name + "': expected a non-negative integer");
            out = v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("config key '" + name + "': expected an integer");
            out = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("config key '" + name + "': expected a number");
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("config key '" + name + "': expected a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) throw ConfigError("config key '" + name + "': expected an array of integers");
            out.clear();
            for (const auto& e : v) {
                if (!e.is_number_integer()) throw ConfigError("config key '" + name + "': expected an array of integers");
                out.push_back(e.get<int>());
            }
        }
    }

    Reader child(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        static const json empty = json::object();
        return Reader(it == obj_.end() ? empty : *it, full(key));
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& at(const char* key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + full(k.c_str()) + "'");
        }
    }

    std::string full(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

TrainConfig config_from_json(const json& doc) {
    TrainConfig c;
    Reader r(doc, "");
    r.read("warmup_epochs", c.warmup_epochs);
    r.read("main_epochs", c.main_epochs);
    r.read("batch_size", c.batch_size);
    r.read("crop_size", c.crop_size);
    r.read("eval_batch_size", c.eval_batch_size);
    r.read("ema_start_epoch", c.ema_start_epoch);
    r.read("checkpoint_every", c.checkpoint_every);
    r.read("seed", c.seed);
    r.read("device", c.device);
    {
        auto o = r.child("optimizer");
        o.read("lr", c.optimizer.lr);
        o.read("beta1", c.optimizer.beta1);
        o.read("beta2", c.optimizer.beta2);
        o.read("eps", c.optimizer.eps);
        o.finish();
    }
    {
        auto f = r.child("filter");
        f.read("momentum", c.filter.momentum);
        f.read("threshold", c.filter.threshold);
        f.read("refresh_period", c.filter.refresh_period);
        f.finish();
    }
    {
        auto n = r.child("network");
        n.read("widths", c.network.widths);
        n.read("depth", c.network.depth);
        n.read("in_channels", c.network.in_channels);
        n.read("convs_per_block", c.network.convs_per_block);
        n.finish();
    }
    // scale defaults follow the configured depth
    c.loss.scales = default_scales(c.network.depth);
    {
        auto l = r.child("loss");
        l.read("alpha", c.loss.alpha);
        l.read("nu1", c.loss.nu1);
        l.read("nu2", c.loss.nu2);
        l.read("sample_cap", c.loss.sample_cap);
        std::string op(to_string(c.loss.pair_op));
        l.read("pair_op", op);
        const auto parsed = parse_pair_op(op);
        if (!parsed) throw ConfigError("config key 'loss.pair_op': expected one of or, and, xnor");
        c.loss.pair_op = *parsed;
        if (l.has("scales")) {
            const json& arr = l.at("scales");
            if (!arr.is_array()) throw ConfigError("config key 'loss.scales': expected an array");
            c.loss.scales.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Reader s(arr[i], fmt::format("loss.scales[{}]", i));
                ScaleSpec spec;
                s.read("tap", spec.tap);
                s.read("delta", spec.delta);
                s.read("tau", spec.tau);
                s.read("weight", spec.weight);
                s.finish();
                c.loss.scales.push_back(spec);
            }
        }
        l.finish();
    }
    {
        auto p = r.child("projection");
        p.read("dim", c.projection_dim);
        p.read("depth", c.projection_depth);
        p.finish();
    }
    {
        auto a = r.child("augment");
        a.read("flips", c.augment.flips);
        a.read("rotations", c.augment.rotations);
        a.finish();
    }
    r.finish();
    if (const auto bad = validate(c); !bad.empty()) throw ConfigError("invalid config: " + bad.front());
    return c;
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

std::vector<ScaleSpec> select_scales(const TrainConfig& cfg, const std::vector<int>& deltas) {
    std::vector<ScaleSpec> pool = cfg.loss.scales;
    for (const auto& s : default_scales(cfg.network.depth)) pool.push_back(s);
    std::vector<ScaleSpec> out;
    for (int d : deltas) {
        const auto it = std::find_if(pool.begin(), pool.end(), [d](const ScaleSpec& s) { return s.delta == d; });
        if (it == pool.end()) {
            std::string have;
            for (const auto& s : default_scales(cfg.network.depth)) have += (have.empty() ? "" : ",") + std::to_string(s.delta);
            throw ConfigError(fmt::format("scales: no regularizer at delta {} (available: {})", d, have));
        }
        if (std::any_of(out.begin(), out.end(), [d](const ScaleSpec& s) { return s.delta == d; })) {
            throw ConfigError(fmt::format("scales: delta {} listed twice", d));
        }
        out.push_back(*it);
    }
    return out;
}

std::vector<std::string> validate(const SynthRunConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.count < 1) out.emplace_back("count >= 1");
    if (cfg.val_count < 0 || cfg.val_count >= cfg.count) out.emplace_back("0 <= val_count < count");
    for (auto& e : data::validate(cfg.images)) out.push_back(std::move(e));
    for (auto& e : data::validate(cfg.scribbles)) out.push_back(std::move(e));
    return out;
}

json to_json(const SynthRunConfig& c) {
    const auto& i = c.images;
    return {
        {"count", c.count},
        {"val_count", c.val_count},
        {"seed", c.seed},
        {"images",
         {{"height", i.height},
          {"width", i.width},
          {"min_blobs", i.min_blobs},
          {"max_blobs", i.max_blobs},
          {"min_radius", i.min_radius},
          {"max_radius", i.max_radius},
          {"blob_gap", i.blob_gap},
          {"fg_low", i.fg_low},
          {"fg_high", i.fg_high},
          {"bg_low", i.bg_low},
          {"bg_high", i.bg_high},
          {"distractor_density", i.distractor_density},
          {"noise_sigma", i.noise_sigma},
          {"size_multiple", i.size_multiple}}},
        {"scribbles", {{"stroke_width", c.scribbles.stroke_width}, {"coverage", c.scribbles.coverage}}},
    };
}

SynthRunConfig synth_config_from_json(const json& doc) {
    SynthRunConfig c;
    Reader r(doc, "");
    r.read("count", c.count);
    r.read("val_count", c.val_count);
    r.read("seed", c.seed);
    {
        auto i = r.child("images");
        i.read("height", c.images.height);
        i.read("width", c.images.width);
        i.read("min_blobs", c.images.min_blobs);
        i.read("max_blobs", c.images.max_blobs);
        i.read("min_radius", c.images.min_radius);
        i.read("max_radius", c.images.max_radius);
        i.read("blob_gap", c.images.blob_gap);
        i.read("fg_low", c.images.fg_low);
        i.read("fg_high", c.images.fg_high);
        i.read("bg_low", c.images.bg_low);
        i.read("bg_high", c.images.bg_high);
        i.read("distractor_density", c.images.distractor_density);
        i.read("noise_sigma", c.images.noise_sigma);
        i.read("size_multiple", c.images.size_multiple);
        i.finish();
    }
    {
        auto s = r.child("scribbles");
        s.read("stroke_width", c.scribbles.stroke_width);
        s.read("coverage", c.scribbles.coverage);
        s.finish();
    }
    r.finish();
    c.images.seed = c.seed;
    c.scribbles.seed = c.seed;
    if (const auto bad = validate(c); !bad.empty()) throw ConfigError("invalid config: " + bad.front());
    return c;
}

std::vector<ConfigKey> config_keys() { return config_keys(to_json(TrainConfig{})); }

std::vector<ConfigKey> config_keys(const json& doc) {
    std::vector<ConfigKey> out;
    const auto walk = [&](auto&& self, const json& node, const std::string& prefix) -> void {
        for (const auto& [k, v] : node.items()) {
            const auto key = prefix.empty() ? k : prefix + "." + k;
            if (v.is_object()) self(self, v, key);
            else out.push_back({key, v.dump()});
        }
    };
    walk(walk, doc, "");
    return out;
}

}  // namespace s2l::trainer
