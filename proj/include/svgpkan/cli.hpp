#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "svgpkan/datagen.hpp"
#include "svgpkan/metrics.hpp"
#include "svgpkan/tape.hpp"

namespace svgpkan {

// Every run key, flat. Study subcommands fill `study`; unset numeric fields
// (-1) take the study defaults in apply_study_defaults. The full key schema
// is documented in the README.
struct RunConfig {
    std::string study;  // study-a | study-b | study-c
    std::uint64_t seed = 0;
    bool seed_set = false;
    i64 epochs = -1;
    i64 batch = -1;
    double kl_weight = 0.01;
    double lr = 2e-3;
    i64 m = 20;
    std::string out_dir = "out";
    bool desk = false;
    double grad_clip = 1e8;  // global gradient-norm ceiling; <= 0 disables

    // study A
    i64 steps_per_epoch = -1;   // minibatches per epoch of fresh samples: 256, or 128 under --desk
    i64 nominal_n = 4096;       // dataset-size scale in the minibatch objective
    i64 eval_fields = 100;      // held-out noisy field realizations
    i64 noise_warmup = -1;      // epochs with the noise head frozen; default epochs/5

    // study B
    i64 grid = -1;  // 64, or 32 under --desk
    i64 proj = 48, code = 16;   // bottleneck fan-in reduction / code width
    i64 n_traj = 20;
    i64 traj_steps = 15;
    i64 n_ens = 10;
    double rollout_perturbation = 0.01;

    // study C
    std::string mnist_dir;  // empty: use SVGPKAN_MNIST_DIR or fall back
    bool synthetic = false;
    bool shared_z = false;
    i64 train_images = 2000;
    i64 eval_per_class = 50;
    double var_penalty = 1.0;
};

// Flat key=value text. Unknown keys and malformed lines throw; '#' starts a
// comment line.
RunConfig parse_config_file(const std::string& path);
// Applies one key=value pair (the file parser and flag overrides share it).
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);
// Fills the -1 fields with the per-study defaults, then applies --desk
// overrides when set.
void apply_study_defaults(RunConfig& cfg);
// Snapshot of every field, fixed order, for config.txt and checkpoints.
KvList config_kv(const RunConfig& cfg);

struct TrainError : std::runtime_error {
    i64 epoch;
    TrainError(i64 e, const std::string& msg) : std::runtime_error(msg), epoch(e) {}
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t step = 0;
    std::string config_text;  // key=value lines
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);
// Copies param values into / out of a checkpoint by name. restore throws on
// a missing name or shape mismatch.
void capture_params(Checkpoint& c, const std::vector<Param*>& params);
void restore_params(const Checkpoint& c, const std::vector<Param*>& params);

enum class Colormap { Viridis, Diverging, Gray };

// Binary PPM (P6), rows written top = max y. The linear value range is
// stated in a "<path>.minmax.txt" sidecar. A constant field renders mid-map.
void render_field(const Field2D& f, Colormap cmap, const std::string& path);

// Study runners. Each writes into cfg.out_dir: config.txt, loss.csv,
// summary.txt, figures, checkpoint.bin, and returns its headline report.
// Training NaN aborts with TrainError carrying the epoch.
CalibrationReport run_study_a(const RunConfig& cfg);

struct StudyBResult {
    SpreadReport spread;
    double physics_factor;
    double one_step_mse;
    double target_variance;
};
StudyBResult run_study_b(const RunConfig& cfg);

AnomalyReport run_study_c(const RunConfig& cfg);

// Fast oracle suite (seconds, deterministic): prints one [PASS]/[FAIL] line
// per check to `out` and returns the failure count.
int run_selftest(std::ostream& out);

}  // namespace svgpkan
