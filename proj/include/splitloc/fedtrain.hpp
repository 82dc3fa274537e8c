#pragma once
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splitloc/dataset.hpp"
#include "splitloc/geometry.hpp"
#include "splitloc/metrics.hpp"
#include "splitloc/model.hpp"
#include "splitloc/rng.hpp"

namespace splitloc {

// Unweighted mean of structurally identical parameter sets. Entries whose
// kind is excluded are copied from the first set instead of averaged.
ParamSet fedavg(std::span<const ParamSet* const> sets,
                const std::function<bool(ParamKind)>& exclude);

// In-place variant used by the trainer: averages non-excluded entries
// across all sets and writes the mean back into every set; excluded
// entries keep each set's own values.
void fedavg_inplace(std::span<ParamSet* const> sets,
                    const std::function<bool(ParamKind)>& exclude);

enum class SplitMode { Random, Spatial };
SplitMode split_mode_from_name(std::string_view name);

// Random: shuffled row split. Spatial: holds out a corner rectangle whose
// area is (1 - fraction) of the bounds, so val positions are unseen.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                          SplitMode mode, const RngService& rng);

enum class LossKind { Geometric, DirectAoa };
LossKind loss_kind_from_name(std::string_view name);

struct TrainConfig {
    int batch_size = 32;
    int epochs = 100;
    double max_lr = 5e-5;
    int avg_every_batches = 10; // 0 disables averaging (non-federated)
    bool federated = true;
    LossKind loss_kind = LossKind::Geometric;
    HuberKind huber_kind = HuberKind::Huber;
    LossWeights weights;
    uint64_t seed = 1;
    bool quiet = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;  // mean over batches
    double val_loss = 0;
    double val_median_m = 0;
    double lr_last = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int64_t singular_skips = 0; // location terms dropped during training
    int best_epoch = 0;         // by validation median error
    double best_val_median_m = 0;
    int64_t total_steps = 0;
};

void write_train_report_csv(const TrainReport& report, const std::string& path);

struct TrainOutput {
    std::vector<EncoderModel> encoders; // best-by-validation snapshot
    DecoderModel decoder;
    TrainReport report;
};

// Full training loop: per access point encoders, shared decoder, Adam with
// a one-cycle schedule, optional periodic encoder averaging.
TrainOutput train(const Dataset& train_data, const Dataset& val_data,
                  std::span<const ApPose> ap_poses, const ImageGrid& grid,
                  const TrainConfig& cfg);

// Eval-mode bearing prediction for a whole dataset; returns per-record
// samples ready for compute_metrics (estimate via triangulation; records
// whose geometry is singular fall back to the ground truth midpoint rule:
// they are skipped). Also used to score the peak-pixel baseline.
std::vector<EstimateSample> predict_dataset(std::vector<EncoderModel>& encoders,
                                            DecoderModel& decoder, const Dataset& data,
                                            std::span<const ApPose> ap_poses);

// Classical baseline: bearings straight from the image peaks.
std::vector<EstimateSample> baseline_peak_dataset(const Dataset& data,
                                                  std::span<const ApPose> ap_poses,
                                                  const ImageGrid& grid);

} // namespace splitloc
