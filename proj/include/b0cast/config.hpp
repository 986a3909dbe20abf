#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "b0cast/grid.hpp"

namespace b0cast {

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path outdir;

    Dims3 grid_dims{32, 32, 32};
    Vec3 fov_mm{220.0, 220.0, 220.0};

    // phantom geometry (jitter ranges are fixed in PhantomSpec)
    Vec3 phantom_semi_axes_mm{70.0, 80.0, 72.0};
    double tissue_chi_ppm = -4.0; // desk-scale contrast, see PhantomSpec
    double air_chi_ppm = 0.36;
    double mask_erosion_mm = 7.0;
    double cavity_margin_mm = 8.0;

    double b0_tesla = 7.0;

    int poses_per_subject = 30;       // includes the initial position
    double pose_max_translation_mm = 10.0;
    double pose_max_rotation_deg = 10.0;

    int train_subjects = 11;
    int test_subjects = 4;

    int navigator_factor = 4;
    double navigator_noise_sigma = 0.02;
    std::vector<double> navigator_echoes_ms{3.8, 4.8};

    std::vector<double> gre_echoes_ms{3.0, 6.0, 9.0, 12.0, 15.0};
    double gre_noise_sigma = 0.0;

    double train_lr = 1e-5;
    double train_weight_decay = 1e-7;
    int train_epochs = 200; // desk-scale stand-in for 2000
    int train_batch = 10;
    bool train_augment = true;
    int base_channels = 8;
    bool mask_loss = false;

    double finetune_lr = 1e-6;
    double finetune_weight_decay = 1e-7;
    int finetune_epochs = 50;
    int finetune_positions = 6;

    double augment_range_order1 = 100.0; // uT/m
    double augment_range_order2 = 100.0; // uT/m^2

    std::vector<double> calibration_amplitudes{-100.0, -50.0, 0.0, 50.0, 100.0};
    double calibration_noise_sigma_hz = 0.0;

    std::vector<int> sweep_epochs{5, 10, 20, 35, 50, 75, 100, 150, 200};
    std::vector<int> sweep_volumes{3, 4, 5, 6};

    GridSpec grid() const { return make_centered_grid(grid_dims, fov_mm); }
};

// Parse + validate a config file: strict key checking, defaults filled,
// units/sign checks. The normalized form is what config_hash covers.
RunConfig validate_config(const std::filesystem::path& path);
RunConfig config_from_json_text(const std::string& text);

std::string config_to_json_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg); // FNV-1a 64 over normalized text

} // namespace b0cast
