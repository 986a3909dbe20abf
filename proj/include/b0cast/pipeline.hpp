#pragma once

#include "b0cast/config.hpp"

namespace b0cast {

enum class Stage { Simulate, Calibrate, Train, Finetune, Predict, Evaluate, All };

Stage stage_from_string(const std::string& s);

// When off, BLAS may use its own threading (run-to-run reproducibility is
// then up to the BLAS). On (the default) pins single-threaded kernels so the
// whole pipeline is bit-reproducible for a fixed seed.
void set_deterministic_mode(bool on);

// Run one stage (or the whole chain). Stages are idempotent for a fixed
// config+seed; a stage refuses to overwrite artifacts written under a
// different config hash unless force is set. Throws PrerequisiteError when
// inputs from an earlier stage are missing.
void run_pipeline(const RunConfig& cfg, Stage stage, bool force = false);

// sweep-finetune: epochs and volumes sweeps on the first test subject,
// writing fig4_epochs.csv / fig5_volumes.csv under <outdir>/sweeps.
void run_sweep_finetune(const RunConfig& cfg, bool force = false);

} // namespace b0cast
