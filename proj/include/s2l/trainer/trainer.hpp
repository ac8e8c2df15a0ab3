#pragma once

#include "s2l/data/data.hpp"
#include "s2l/metrics/metrics.hpp"
#include "s2l/model/unet.hpp"
#include "s2l/pseudolabel/pseudolabel.hpp"
#include "s2l/trainer/config.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l::trainer {

// Runtime failure: divergence, unusable dataset, unreadable checkpoint.
class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    int epoch = 0;
    std::string stage;  // "warmup" or "main"
    double total = 0.0;
    double scribble = 0.0;
    // absent during warm-up
    std::optional<double> pseudo;
    // one entry per configured scale, absent during warm-up; batches whose
    // pair set was degenerate contribute zero and are counted in `skipped`
    std::vector<std::optional<double>> contrastive;
    int skipped = 0;
    int steps = 0;
    double val_iou = 0.0;
    double val_mdice = 0.0;
    std::size_t omega_p = 0;
    bool refreshed = false;
    double wall_seconds = 0.0;
};

struct RunLog {
    std::vector<double> scale_weights;
    std::vector<EpochRecord> records;
};

// Equal in every field except wall time.
bool same_outcome(const EpochRecord& a, const EpochRecord& b);
bool same_outcome(const RunLog& a, const RunLog& b);

void write_csv(std::ostream& out, const RunLog& log);
nlohmann::json to_json(const RunLog& log);
RunLog runlog_from_json(const nlohmann::json& doc);

// Everything a run carries between epochs.
struct TrainState {
    TrainConfig cfg;
    model::UNet<float> net;
    std::vector<model::ProjectionHead<float>> heads;
    model::Adam<float> optimizer;
    std::vector<pseudolabel::EmaTracker> trackers;
    std::vector<PseudoLabelMap> pseudo;
    // per image, per configured scale
    std::vector<std::vector<DownscaledLabelMap>> downscaled;
    int epoch = 0;
    RunLog log;

    std::vector<model::Param<float>*> parameters();
};

TrainState init_state(const TrainConfig& cfg, const std::vector<data::Sample>& train);

using EpochCallback = std::function<void(const TrainState&, const EpochRecord&)>;

// Warm-up epochs up to min(until, warmup_epochs): scribble loss only; ends by
// generating pseudo-labels from the EMA.
void run_warmup(TrainState& state, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                const EpochCallback& on_epoch = {}, int until = -1);
// Main-stage epochs up to min(until, warmup + main): total loss with pseudo-label
// refresh at main epochs divisible by the refresh period.
void run_main(TrainState& state, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
              const EpochCallback& on_epoch = {}, int until = -1);
// Both stages.
void train(TrainState& state, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
           const EpochCallback& on_epoch = {}, int until = -1);

// Pseudo-labels and pooled maps from the current EMA.
void refresh_pseudo(TrainState& state, const std::vector<data::Sample>& train);

// Evaluation-mode probabilities for each image.
std::vector<PredictionGrid> predict(model::UNet<float>& net, const std::vector<data::Sample>& samples, int batch_size = 8);
std::vector<metrics::ImageScore> evaluate(model::UNet<float>& net, const std::vector<data::Sample>& samples,
                                          int batch_size = 8);
// Same scoring for given predictions; samples without masks are skipped.
std::vector<metrics::ImageScore> score(const std::vector<PredictionGrid>& preds, const std::vector<data::Sample>& samples);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
// Restores network, heads, optimizer, trackers, pseudo-labels, epoch and log;
// pooled maps are rebuilt from `train`.
TrainState load_checkpoint(const std::filesystem::path& path, const std::vector<data::Sample>& train);
// Network only, for evaluation.
model::UNet<float> load_network(const std::filesystem::path& path, TrainConfig* cfg = nullptr);
// Run log stored with the checkpoint.
RunLog load_runlog(const std::filesystem::path& path);
// Trackers only, keyed by image index.
std::vector<pseudolabel::EmaTracker> load_trackers(const std::filesystem::path& path);

// Lowercase hex SHA-1 of "blob <size>\0" + content, as git computes object ids.
std::string git_blob_hash(const std::string& content);

void write_run_summary(const std::filesystem::path& path, const TrainState& state, const std::string& manifest_hash,
                       double wall_seconds);

}  // namespace s2l::trainer
