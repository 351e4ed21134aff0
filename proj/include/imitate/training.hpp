#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imitate/condunet.hpp"
#include "imitate/losses.hpp"
#include "imitate/phantom.hpp"
#include "imitate/rng.hpp"

namespace imitate::train {

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 1e-3;  // cosine-annealed from here to ~0
    int batch_size = 8;
    int steps_per_epoch = 0;  // 0 = one pass over the training slices
    losses::LossWeights weights;
    int n_inputs = 3;
    uint64_t seed = 1;
    int ncc_window = 9;
    double val_fraction = 0.2;           // of table positions
    std::string sampler = "nearest";     // or "combinatorial"
    std::string condition_on = "amplitude";  // or "phase"
    bool use_masks = true;

    void validate() const;
};

/// Cosine annealing: lr0 * (1 + cos(pi * step / total)) / 2.
double cosine_lr(double lr0, int step, int total_steps);

struct TrainingSample {
    const phantom::AcquiredSlice* target = nullptr;
    std::vector<const phantom::AcquiredSlice*> movers;  // sorted by acquisition time
    std::vector<double> deltas;                         // condition(mover) - condition(target)
    int table_position = 0;
};

/// Hold-one-out batch assembly over the given table-position groups.
/// "nearest": ceil(n/2) nearest-in-time slices before the target and
/// floor(n/2) after, falling back to the available side near boundaries.
/// "combinatorial": a uniform random n-subset of the remaining slices.
std::vector<TrainingSample> sample_training_batch(
    const std::vector<const std::vector<phantom::AcquiredSlice>*>& groups, int n,
    int batch_size, Rng& rng, const std::string& sampler = "nearest",
    const std::string& condition_on = "amplitude");

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(unet::ParamSet& params, const std::vector<Tensor>& grads, double lr);

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct StepResult {
    losses::LossReport report;
};

/// One optimization step over a batch; throws on non-finite loss after
/// dumping diagnostics to `diag_path` (when non-empty).
StepResult train_step(unet::CondUNet& net, Adam& adam,
                      const std::vector<TrainingSample>& batch, const TrainConfig& config,
                      double lr, const std::string& diag_path = "");

struct FitResult {
    std::string checkpoint_path;
    double best_val_ncc = 0.0;
    double reference_val_ncc = 0.0;  // nearest-mover copy, no warping
    bool flagged = false;
    int total_steps = 0;
};

/// Full training run: train/validation split by table position, cosine
/// schedule, JSONL step log, best-validation checkpointing.
FitResult fit(const phantom::SliceDataset& dataset, const unet::ModelConfig& model_config,
              const TrainConfig& config, const std::string& out_dir);

/// Deterministic split of table positions (validation positions evenly
/// spread, at least one when val_fraction > 0 and more than one position).
void split_positions(int n_positions, double val_fraction, std::vector<int>* train_pos,
                     std::vector<int>* val_pos);

/// Condition value of a slice under the configured conditioning variable.
double condition_value(const phantom::AcquiredSlice& s, const std::string& condition_on);

}  // namespace imitate::train
