#pragma once

#include <functional>
#include <optional>

#include "b0cast/nn/adam.hpp"
#include "b0cast/nn/unet.hpp"
#include "b0cast/rigid.hpp"
#include "b0cast/shim.hpp"
#include "b0cast/volume.hpp"

namespace b0cast::nn {

// Fixed B0 channel normalization; anatomy channels are scaled by their own
// per-volume max. Both are recorded in checkpoints and inverted by predict.
inline constexpr double kB0ScaleHz = 100.0;

struct TrainingInstance {
    Volume3D b0_init;  // Hz
    Volume3D anat_init;
    Volume3D anat_new;
    Volume3D b0_new;   // Hz target
    RigidPose pose;
    Mask3D mask;
    double anat_init_max = 1.0; // normalization metadata, set by normalize()
    double anat_new_max = 1.0;

    void normalize_metadata();
    void validate() const;
};

struct TrainHyper {
    AdamHyper adam{};            // lr 1e-5, wd 1e-7 defaults
    int epochs = 200;            // desk-scale stand-in for the full 2000
    int batch = 10;
    bool augment = true;
    double augment_range_order1 = 100.0; // uT/m
    double augment_range_order2 = 100.0; // uT/m^2
    std::uint64_t seed = 0;              // permutation + augmentation stream
    bool mask_loss = false;              // MSE over the full volume by default
};

struct TrainResult {
    std::vector<double> epoch_loss;
};

// Called after each completed epoch (1-based count). An E-epoch run is the
// exact prefix of a longer run with the same seed, so snapshots taken here
// equal independent shorter runs bit for bit.
using EpochCallback = std::function<void(int, const UNetParams&)>;

// In-place training loop: per epoch, permute instances, augment each one
// (same shim field added to the input B0 channel and the target), minibatch
// Adam steps on the MSE. Deterministic given hyper.seed. `basis` may be null
// only when hyper.augment is false.
TrainResult train_unet(UNetParams& params, const std::vector<TrainingInstance>& data,
                       const ShimBasis* basis, const TrainHyper& hyper,
                       const EpochCallback& on_epoch = {});

// Builds the network and trains it (general training entry point).
UNetParams train(const std::vector<TrainingInstance>& data, const UNetConfig& config,
                 const ShimBasis* basis, const TrainHyper& hyper, std::uint64_t init_seed,
                 TrainResult* result = nullptr);

// Same loop with fine-tuning hyperparameters; the input params are copied,
// Adam restarts, and the fine-tuned weights are returned.
UNetParams finetune(const UNetParams& params, const std::vector<TrainingInstance>& subject_data,
                    const ShimBasis* basis, const TrainHyper& hyper, TrainResult* result = nullptr);

// Denormalized Hz prediction on the input grid. Pure function.
Volume3D predict(const UNetParams& params, const Volume3D& b0_init, const Volume3D& anat_init,
                 const Volume3D& anat_new);

// Normalized (input, target) tensors for one instance, optionally with an
// augmentation field (Hz) added to both B0 channels.
std::pair<Tensor5, Tensor5> instance_tensors(const TrainingInstance& inst,
                                             const Volume3D* augment_field);

struct FinetuneHyperDefaults {
    static TrainHyper make() {
        TrainHyper h;
        h.adam.lr = 1e-6;
        h.adam.weight_decay = 1e-7;
        h.epochs = 50;
        return h;
    }
};

} // namespace b0cast::nn
