#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "b0cast/dataset.hpp"
#include "b0cast/nn/unet.hpp"
#include "b0cast/volume.hpp"

namespace b0cast {

enum class Approach { NC, PR0, EPI, PRFT };

std::string approach_name(Approach a);

struct ResidualStats {
    double median_hz = 0.0;
    double iqr_hz = 0.0;
};

// Median and Q3-Q1 of |pred - gt| over masked voxels. Quantiles use linear
// interpolation between order statistics (h = (n-1)*q).
ResidualStats residual_stats(const Volume3D& pred, const Volume3D& gt, const Mask3D& mask);

// Quantile of a sample by the same rule (exposed for tests).
double quantile_linear(std::vector<double> values, double q);

struct ApproachResult {
    Approach approach = Approach::NC;
    std::string subject;
    int position = 0;
    ResidualStats stats;
    std::string residual_path; // B0V file, empty if not written
};

struct EvalReport {
    std::vector<ApproachResult> cells;
    // aggregates per approach: median of per-position medians / IQRs
    std::map<std::string, double> median_of_medians;
    std::map<std::string, double> median_of_iqrs;
    std::map<std::string, double> pairwise_p; // "A_vs_B" -> p-value

    void recompute_aggregates();
    std::vector<double> medians_for(Approach a) const;
};

// Exact two-sided Wilcoxon signed-rank test for paired samples (n <= 25
// exact via rank-sum enumeration with midranks; larger n uses the normal
// approximation with tie correction). Zero differences are dropped; if all
// differences are zero, p = 1 by convention.
double paired_test(const std::vector<double>& a, const std::vector<double>& b);

struct SubjectArtifacts {
    const SubjectEntry* subject = nullptr;
    std::vector<int> eval_positions;       // held-out position indices
    const nn::UNetParams* general = nullptr;
    const nn::UNetParams* finetuned = nullptr; // may be null (PRFT skipped)
};

// Evaluate NC / PR0 / EPI / PRFT on every held-out position of a subject.
// When residual_dir is non-empty, |pred-gt| volumes are written there.
std::vector<ApproachResult> evaluate_subject(const std::filesystem::path& dataset_root,
                                             const SubjectArtifacts& art,
                                             const std::filesystem::path& residual_dir = {});

void write_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_fig3_csv(const EvalReport& report, const std::filesystem::path& path);

struct SweepRow {
    std::string sweep;  // "epochs" or "volumes"
    int value = 0;
    std::string subject;
    int position = 0;
    double median_hz = 0.0;
    double iqr_hz = 0.0;
};

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

} // namespace b0cast
