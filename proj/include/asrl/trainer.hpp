#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "asrl/datapipe.hpp"
#include "asrl/models.hpp"
#include "asrl/objectives.hpp"
#include "asrl/optim.hpp"
#include "asrl/record.hpp"
#include "asrl/rng.hpp"

namespace asrl {

struct TrainConfig {
    ObjectiveConfig objective;
    ModelConfig g_config;
    ModelConfig d_config;
    // Empty means "pick the optimizer that matches the objective".
    std::optional<OptimizerConfig> g_optimizer;
    std::optional<OptimizerConfig> d_optimizer;
    std::size_t batch_size = 16;
    std::uint64_t total_g_iters = 100;
    std::uint64_t log_every = 1;
    // 0 writes only the final checkpoint.
    std::uint64_t checkpoint_every = 0;
    std::uint64_t seed = 0;
    // Off keeps wall_ms at 0 in emitted logs, so equal-seed runs stay
    // byte-identical; on writes the measured value.
    bool log_wall_time = false;
    // Opaque text stored inside every checkpoint (the CLI puts the resolved
    // run configuration here so a checkpoint alone can rebuild its models).
    // Empty embeds nothing.
    std::string config_echo;
};

// Alternating adversarial training: per generator iteration, n_critic
// discriminator steps (fresh batch each, weights clipped afterwards for the
// clipped-Wasserstein objective only), then one generator step on the
// adversarial-plus-reconstruction total. Every random draw comes from named
// counter streams of the run seed, so a run is a pure function of its config.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, ImageDataset dataset);

    // One discriminator update on a fresh batch; returns its loss. Exposed so
    // harnesses can check per-step invariants like the clip bound.
    double critic_step();

    // One generator update, closing the current iteration. The returned
    // record carries the last critic loss, the adversarial generator loss,
    // the per-pixel reconstruction metric of the generator batch (0 for
    // noise-input generators, which have no paired low-res reference), and
    // the measured wall time since the iteration's first critic step.
    TrainRecord generator_step();

    // One full generator iteration: n_critic critic steps, then one
    // generator step.
    TrainRecord step();

    // Runs the remaining iterations. Rows stream to log_out (header included
    // when starting from iteration zero) for every log_every-th iteration and
    // the final one; the same rows are returned, with wall_ms zeroed unless
    // log_wall_time is set. A non-empty checkpoint_dir receives
    // checkpoint_<iter>.bin every checkpoint_every iterations and
    // checkpoint_final.bin at the end.
    std::vector<TrainRecord> run(std::ostream* log_out, const std::string& checkpoint_dir);

    // Little-endian binary snapshot of everything a bit-identical resume
    // needs: both parameter stores, optimizer moments and step counts, rng
    // counters, dataset position, and the iteration counters. Guarded by a
    // trailing crc32; load applies nothing until the whole file has been
    // verified against the current configuration.
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    std::uint64_t g_iter() const { return g_iter_; }
    std::uint64_t d_steps_taken() const { return d_steps_; }
    std::uint64_t clip_calls() const { return clip_calls_; }

    Model& generator() { return gen_; }
    Model& discriminator() { return disc_; }
    const Model& generator() const { return gen_; }
    const Model& discriminator() const { return disc_; }
    const Optimizer& g_optimizer() const { return opt_g_; }
    const Optimizer& d_optimizer() const { return opt_d_; }
    const TrainConfig& config() const { return cfg_; }
    const ImageDataset& dataset() const { return data_; }

private:
    Tensor generator_input(const Batch& batch);
    Tensor generate_fake(const Tensor& g_in);
    void ensure_finite(double v, const char* term) const;

    TrainConfig cfg_;
    ImageDataset data_;
    Model gen_;
    Model disc_;
    Optimizer opt_g_;
    Optimizer opt_d_;
    RngStream eps_rng_;
    RngStream noise_rng_;
    double last_jd_ = 0.0;
    bool phase_open_ = false;
    std::chrono::steady_clock::time_point phase_start_{};
    std::uint64_t g_iter_ = 0;
    std::uint64_t d_steps_ = 0;
    std::uint64_t clip_calls_ = 0;
};

// The run-configuration text embedded in a checkpoint. IoError when the file
// carries none (or is unreadable or corrupt).
std::string checkpoint_config_json(const std::string& path);

// Loads only one network's parameter tensors from a checkpoint into a freshly
// built model; prefix is "g/" or "d/". Optimizer and progress blobs are
// ignored. Every shape is validated before anything is applied.
void load_model_params(Model& model, const std::string& path, const std::string& prefix);

}  // namespace asrl
