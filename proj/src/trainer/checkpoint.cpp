#include "s2l/trainer/trainer.hpp"

#include <fstream>

namespace s2l::trainer {

namespace fs = std::filesystem;

namespace {

Archive open(const fs::path& path) {
    if (!fs::exists(path)) throw TrainError("checkpoint " + path.string() + " does not exist");
    try {
        return Archive::load(path);
    } catch (const std::exception& e) {
        throw TrainError("checkpoint " + path.string() + ": " + e.what());
    }
}

TrainConfig stored_config(const Archive& a, const fs::path& path) {
    if (!a.meta().contains("config")) throw TrainError("checkpoint " + path.string() + " carries no config");
    return config_from_json(a.meta().at("config"));
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& st) {
    auto& s = const_cast<TrainState&>(st);
    Archive a;
    a.meta()["kind"] = "s2l-train-state";
    a.meta()["config"] = to_json(st.cfg);
    a.meta()["epoch"] = st.epoch;
    a.meta()["runlog"] = to_json(st.log);
    a.meta()["images"] = st.trackers.size();
    a.meta()["pseudo"] = !st.pseudo.empty();
    model::save_state(a, "net.", s.net.parameters(), s.net.buffers());
    for (std::size_t k = 0; k < s.heads.size(); ++k) {
        model::save_state(a, "head" + std::to_string(k) + ".", s.heads[k].parameters(), s.heads[k].buffers());
    }
    st.optimizer.save(a, "adam");
    for (std::size_t i = 0; i < st.trackers.size(); ++i) pseudolabel::encode(a, "tracker/" + std::to_string(i), st.trackers[i]);
    for (std::size_t i = 0; i < st.pseudo.size(); ++i) {
        const auto raw = pseudolabel::to_u8(st.pseudo[i].labels());
        a.put<std::uint8_t>("pseudo/" + std::to_string(i),
                            {static_cast<std::uint64_t>(raw.height()), static_cast<std::uint64_t>(raw.width())}, raw.values());
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // write then rename so that an interrupted save never leaves a torn file
    const fs::path tmp = path.string() + ".tmp";
    a.save(tmp);
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path, const std::vector<data::Sample>& train) {
    const Archive a = open(path);
    const TrainConfig cfg = stored_config(a, path);
    TrainState st = init_state(cfg, train);
    try {
        const auto images = a.meta().at("images").get<std::size_t>();
        if (images != train.size()) {
            throw TrainError("checkpoint tracks " + std::to_string(images) + " training images, the dataset has " +
                             std::to_string(train.size()));
        }
        model::load_state(a, "net.", st.net.parameters(), st.net.buffers());
        for (std::size_t k = 0; k < st.heads.size(); ++k) {
            model::load_state(a, "head" + std::to_string(k) + ".", st.heads[k].parameters(), st.heads[k].buffers());
        }
        st.optimizer.load(a, "adam");
        for (std::size_t i = 0; i < images; ++i) {
            st.trackers[i] = pseudolabel::decode_tracker(a, "tracker/" + std::to_string(i));
            if (st.trackers[i].height() != train[i].image.height() || st.trackers[i].width() != train[i].image.width()) {
                throw TrainError("checkpoint tracker " + std::to_string(i) + " does not match image " + train[i].id);
            }
        }
        if (a.meta().at("pseudo").get<bool>()) {
            for (std::size_t i = 0; i < images; ++i) {
                const auto& e = a.require("pseudo/" + std::to_string(i));
                Raster<std::uint8_t> raw(static_cast<int>(e.shape.at(0)), static_cast<int>(e.shape.at(1)), 1,
                                         a.get<std::uint8_t>(e.name));
                st.pseudo.emplace_back(pseudolabel::from_u8(raw));
            }
            for (std::size_t i = 0; i < images; ++i) {
                std::vector<DownscaledLabelMap> pooled;
                for (const auto& s : cfg.loss.scales) {
                    pooled.push_back(pseudolabel::downscale_labels(st.pseudo[i], train[i].scribbles, s.delta, cfg.loss.nu1,
                                                                   cfg.loss.nu2));
                }
                st.downscaled.push_back(std::move(pooled));
            }
        }
        st.epoch = a.meta().at("epoch").get<int>();
        st.log = runlog_from_json(a.meta().at("runlog"));
    } catch (const TrainError&) {
        throw;
    } catch (const std::exception& e) {
        throw TrainError("checkpoint " + path.string() + ": " + e.what());
    }
    return st;
}

model::UNet<float> load_network(const fs::path& path, TrainConfig* cfg_out) {
    const Archive a = open(path);
    const TrainConfig cfg = stored_config(a, path);
    model::UNet<float> net(cfg.network, cfg.seed);
    try {
        model::load_state(a, "net.", net.parameters(), net.buffers());
    } catch (const std::exception& e) {
        throw TrainError("checkpoint " + path.string() + ": " + e.what());
    }
    if (cfg_out) *cfg_out = cfg;
    return net;
}

RunLog load_runlog(const fs::path& path) {
    const Archive a = open(path);
    try {
        return runlog_from_json(a.meta().at("runlog"));
    } catch (const std::exception& e) {
        throw TrainError("checkpoint " + path.string() + ": " + e.what());
    }
}

std::vector<pseudolabel::EmaTracker> load_trackers(const fs::path& path) {
    const Archive a = open(path);
    std::vector<pseudolabel::EmaTracker> out;
    const std::size_t images = a.meta().value("images", std::size_t{0});
    if (images == 0 || !a.contains("tracker/0.ema")) {
        throw TrainError("checkpoint " + path.string() + " has no tracker state; export needs a training checkpoint written by 'train'");
    }
    try {
        for (std::size_t i = 0; i < images; ++i) out.push_back(pseudolabel::decode_tracker(a, "tracker/" + std::to_string(i)));
    } catch (const std::exception& e) {
        throw TrainError("checkpoint " + path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace s2l::trainer
