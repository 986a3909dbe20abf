#include "b0cast/nn/train.hpp"

#include <algorithm>
#include <cmath>

namespace b0cast::nn {

void TrainingInstance::normalize_metadata() {
    anat_init_max = std::max(1e-12f, max_abs(anat_init));
    anat_new_max = std::max(1e-12f, max_abs(anat_new));
}

void TrainingInstance::validate() const {
    const GridSpec& g = b0_init.grid;
    if (!(anat_init.grid == g) || !(anat_new.grid == g) || !(b0_new.grid == g) ||
        !(mask.grid == g))
        throw ShapeError("TrainingInstance: channels do not share one grid");
    if (b0_init.units != Units::Hz || b0_new.units != Units::Hz)
        throw ShapeError("TrainingInstance: B0 channels must be in Hz");
}

namespace {

Tensor5 volumes_to_input(const Volume3D& b0, const Volume3D& anat_i, const Volume3D& anat_n,
                         double anat_i_max, double anat_n_max, const Volume3D* aug) {
    const auto& d = b0.grid.dims;
    Tensor5 t(1, 3, d[0], d[1], d[2]);
    const std::size_t n = b0.grid.num_voxels();
    float* c0 = t.channel_ptr(0, 0);
    float* c1 = t.channel_ptr(0, 1);
    float* c2 = t.channel_ptr(0, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double v = b0.data[i];
        if (aug) v += aug->data[i];
        c0[i] = static_cast<float>(v / kB0ScaleHz);
        c1[i] = static_cast<float>(anat_i.data[i] / anat_i_max);
        c2[i] = static_cast<float>(anat_n.data[i] / anat_n_max);
    }
    return t;
}

} // namespace

std::pair<Tensor5, Tensor5> instance_tensors(const TrainingInstance& inst,
                                             const Volume3D* augment_field) {
    inst.validate();
    Tensor5 input = volumes_to_input(inst.b0_init, inst.anat_init, inst.anat_new,
                                     inst.anat_init_max, inst.anat_new_max, augment_field);
    const auto& d = inst.b0_new.grid.dims;
    Tensor5 target(1, 1, d[0], d[1], d[2]);
    const std::size_t n = inst.b0_new.grid.num_voxels();
    float* tp = target.channel_ptr(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double v = inst.b0_new.data[i];
        if (augment_field) v += augment_field->data[i];
        tp[i] = static_cast<float>(v / kB0ScaleHz);
    }
    return {std::move(input), std::move(target)};
}

TrainResult train_unet(UNetParams& params, const std::vector<TrainingInstance>& data,
                       const ShimBasis* basis, const TrainHyper& hyper,
                       const EpochCallback& on_epoch) {
    if (data.empty()) throw ConfigError("train: dataset is empty");
    if (hyper.batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(hyper.adam.lr >= 0.0)) throw ConfigError("train: negative learning rate");
    if (hyper.augment && !basis) throw ConfigError("train: augmentation requires a shim basis");
    const GridSpec grid = data.front().b0_init.grid;
    for (const auto& inst : data) {
        inst.validate();
        if (!(inst.b0_init.grid == grid))
            throw ShapeError("train: instances do not share one grid");
    }
    if (hyper.augment && !(basis->grid == grid))
        throw ShapeError("train: augmentation basis grid does not match the dataset");

    Rng rng(hyper.seed);
    TrainResult result;
    const std::size_t n = data.size();

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const std::vector<std::size_t> perm = rng.permutation(n);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch));
            const float inv_b = 1.0f / static_cast<float>(stop - start);
            UNetGrads grads = zero_grads(params);
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const TrainingInstance& inst = data[perm[bi]];
                std::optional<AugmentationSample> aug;
                if (hyper.augment)
                    aug = sample_augmentation(rng, hyper.augment_range_order1,
                                              hyper.augment_range_order2, *basis);
                auto [input, target] =
                    instance_tensors(inst, aug ? &aug->field : nullptr);
                UNetCache cache;
                const Tensor5 out = unet_forward(params, input, &cache);
                const std::vector<std::uint8_t>* mask =
                    hyper.mask_loss ? &inst.mask.data : nullptr;
                batch_loss += mse_forward(out, target, mask) * inv_b;
                const Tensor5 gout_raw = mse_backward(out, target, mask);
                UNetGrads g = unet_backward(params, cache, gout_raw);
                grads.add_scaled(g, inv_b);
            }
            if (!std::isfinite(batch_loss))
                throw NumericalError("train: NaN loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batches) +
                                     " (lr = " + std::to_string(hyper.adam.lr) + ")");
            ++params.adam_step_count;
            for (std::size_t li = 0; li < params.layers.size(); ++li) {
                adam_step(params.layers[li].weight, grads.weight[li], params.m_w[li],
                          params.v_w[li], params.adam_step_count, hyper.adam);
                adam_step(params.layers[li].bias, grads.bias[li], params.m_b[li], params.v_b[li],
                          params.adam_step_count, hyper.adam);
            }
            epoch_loss += batch_loss;
            ++batches;
        }
        params.check_finite("train");
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
        ++params.epoch;
        if (on_epoch) on_epoch(epoch + 1, params);
    }
    return result;
}

UNetParams train(const std::vector<TrainingInstance>& data, const UNetConfig& config,
                 const ShimBasis* basis, const TrainHyper& hyper, std::uint64_t init_seed,
                 TrainResult* result) {
    UNetParams params = build_unet(config, init_seed);
    TrainResult r = train_unet(params, data, basis, hyper);
    if (result) *result = std::move(r);
    return params;
}

UNetParams finetune(const UNetParams& params, const std::vector<TrainingInstance>& subject_data,
                    const ShimBasis* basis, const TrainHyper& hyper, TrainResult* result) {
    UNetParams ft = params;
    ft.reset_adam(); // fresh optimizer for the short subject-specific run
    TrainResult r = train_unet(ft, subject_data, basis, hyper);
    if (result) *result = std::move(r);
    return ft;
}

Volume3D predict(const UNetParams& params, const Volume3D& b0_init, const Volume3D& anat_init,
                 const Volume3D& anat_new) {
    if (!(b0_init.grid == anat_init.grid) || !(b0_init.grid == anat_new.grid))
        throw ShapeError("predict: input grids differ");
    if (b0_init.units != Units::Hz) throw ShapeError("predict: b0_init must be in Hz");
    const double ai_max = std::max(1e-12f, max_abs(anat_init));
    const double an_max = std::max(1e-12f, max_abs(anat_new));
    const Tensor5 input =
        volumes_to_input(b0_init, anat_init, anat_new, ai_max, an_max, nullptr);
    const Tensor5 out = unet_forward(params, input);
    Volume3D res(b0_init.grid, Units::Hz);
    const float* src = out.channel_ptr(0, 0);
    for (std::size_t i = 0; i < res.data.size(); ++i)
        res.data[i] = static_cast<float>(src[i] * kB0ScaleHz);
    return res;
}

} // namespace b0cast::nn
