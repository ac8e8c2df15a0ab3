#include "s2l/trainer/trainer.hpp"

#include <fmt/format.h>
#include <openssl/sha.h>

#include <fstream>
#include <ostream>

namespace s2l::trainer {

using nlohmann::json;

bool same_outcome(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.stage == b.stage && a.total == b.total && a.scribble == b.scribble &&
           a.pseudo == b.pseudo && a.contrastive == b.contrastive && a.skipped == b.skipped && a.steps == b.steps &&
           a.val_iou == b.val_iou && a.val_mdice == b.val_mdice && a.omega_p == b.omega_p && a.refreshed == b.refreshed;
}

bool same_outcome(const RunLog& a, const RunLog& b) {
    if (a.scale_weights != b.scale_weights || a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (!same_outcome(a.records[i], b.records[i])) return false;
    }
    return true;
}

void write_csv(std::ostream& out, const RunLog& log) {
    out << "epoch,stage,total,L_s,L_p";
    for (std::size_t k = 0; k < log.scale_weights.size(); ++k) out << ",L_c" << k + 1;
    out << ",skipped,steps,omega_p,refreshed,val_iou,val_mdice,wall_s\n";
    const auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.9g}", *v) : std::string(); };
    for (const auto& r : log.records) {
        out << fmt::format("{},{},{:.9g},{:.9g},{}", r.epoch, r.stage, r.total, r.scribble, opt(r.pseudo));
        for (std::size_t k = 0; k < log.scale_weights.size(); ++k) {
            out << ',' << (k < r.contrastive.size() ? opt(r.contrastive[k]) : std::string());
        }
        out << fmt::format(",{},{},{},{},{:.6f},{:.6f},{:.3f}\n", r.skipped, r.steps, r.omega_p, r.refreshed ? 1 : 0,
                           r.val_iou, r.val_mdice, r.wall_seconds);
    }
}

json to_json(const RunLog& log) {
    json records = json::array();
    for (const auto& r : log.records) {
        json c = json::array();
        for (const auto& v : r.contrastive) c.push_back(v ? json(*v) : json(nullptr));
        records.push_back({{"epoch", r.epoch},
                           {"stage", r.stage},
                           {"total", r.total},
                           {"scribble", r.scribble},
                           {"pseudo", r.pseudo ? json(*r.pseudo) : json(nullptr)},
                           {"contrastive", c},
                           {"skipped", r.skipped},
                           {"steps", r.steps},
                           {"val_iou", r.val_iou},
                           {"val_mdice", r.val_mdice},
                           {"omega_p", r.omega_p},
                           {"refreshed", r.refreshed},
                           {"wall_seconds", r.wall_seconds}});
    }
    return {{"scale_weights", log.scale_weights}, {"records", records}};
}

RunLog runlog_from_json(const json& doc) {
    RunLog log;
    log.scale_weights = doc.at("scale_weights").get<std::vector<double>>();
    for (const auto& j : doc.at("records")) {
        EpochRecord r;
        r.epoch = j.at("epoch").get<int>();
        r.stage = j.at("stage").get<std::string>();
        r.total = j.at("total").get<double>();
        r.scribble = j.at("scribble").get<double>();
        if (!j.at("pseudo").is_null()) r.pseudo = j.at("pseudo").get<double>();
        for (const auto& c : j.at("contrastive")) {
            r.contrastive.push_back(c.is_null() ? std::optional<double>() : std::optional<double>(c.get<double>()));
        }
        r.skipped = j.at("skipped").get<int>();
        r.steps = j.at("steps").get<int>();
        r.val_iou = j.at("val_iou").get<double>();
        r.val_mdice = j.at("val_mdice").get<double>();
        r.omega_p = j.at("omega_p").get<std::size_t>();
        r.refreshed = j.at("refreshed").get<bool>();
        r.wall_seconds = j.at("wall_seconds").get<double>();
        log.records.push_back(std::move(r));
    }
    return log;
}

std::string git_blob_hash(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
    std::string hex;
    for (unsigned char b : digest) hex += fmt::format("{:02x}", b);
    return hex;
}

void write_run_summary(const std::filesystem::path& path, const TrainState& st, const std::string& manifest_hash,
                       double wall_seconds) {
    json summary = {{"config", to_json(st.cfg)},
                    {"manifest_sha1", manifest_hash},
                    {"epochs_completed", st.epoch},
                    {"wall_seconds", wall_seconds},
                    {"backend", "cpu, single thread; identical seed and config reproduce the run log exactly"}};
    if (!st.log.records.empty()) {
        const auto& last = st.log.records.back();
        json c = json::array();
        for (const auto& v : last.contrastive) c.push_back(v ? json(*v) : json(nullptr));
        summary["final"] = {{"val_iou", last.val_iou}, {"val_mdice", last.val_mdice}, {"total", last.total},
                            {"scribble", last.scribble}, {"pseudo", last.pseudo ? json(*last.pseudo) : json(nullptr)},
                            {"contrastive", c}, {"omega_p", last.omega_p}};
    }
    std::ofstream out(path);
    if (!out) throw TrainError("cannot write " + path.string());
    out << summary.dump(2) << '\n';
}

}  // namespace s2l::trainer
