#include "asrl/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "asrl/config.hpp"
#include "asrl/datapipe.hpp"
#include "asrl/errors.hpp"
#include "asrl/evalkit.hpp"
#include "asrl/graph.hpp"
#include "asrl/models.hpp"
#include "asrl/record.hpp"
#include "asrl/rng.hpp"
#include "asrl/toyw1.hpp"
#include "asrl/trainer.hpp"
#include "json.hpp"

namespace asrl {

namespace fs = std::filesystem;

namespace {

// The pipeline prepares batches on the training thread, so every valid value
// currently behaves like 1; validating anyway makes sweep scripts fail loudly
// on typos instead of silently running with a default.
void check_thread_env() {
    const char* v = std::getenv("ASRL_THREADS");
    if (!v) return;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*v == '\0' || *end != '\0' || n < 1)
        throw ConfigError("ASRL_THREADS must be a positive integer, got \"" + std::string(v) +
                          "\"");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path);
    os << text;
    if (!os) throw IoError("write failed for " + path);
}

std::string zero_padded(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(v));
    return buf;
}

Tensor nth_image(const Tensor& batch, std::size_t i) {
    std::vector<std::size_t> shape(batch.shape().begin() + 1, batch.shape().end());
    Tensor t(shape);
    std::copy_n(batch.data() + i * t.size(), t.size(), t.data());
    return t;
}

Tensor stack_inputs(const ImageDataset& ds, std::size_t count) {
    const Tensor& first = ds.input(0);
    Tensor out({count, first.dim(0), first.dim(1), first.dim(2)});
    for (std::size_t i = 0; i < count; ++i)
        std::copy_n(ds.input(i).data(), first.size(), out.data() + i * first.size());
    return out;
}

Tensor stack_labels(const ImageDataset& ds, std::size_t count) {
    const Tensor& first = ds.label(0);
    Tensor out({count, first.dim(0), first.dim(1), first.dim(2)});
    for (std::size_t i = 0; i < count; ++i)
        std::copy_n(ds.label(i).data(), first.size(), out.data() + i * first.size());
    return out;
}

// Same noise every call, so grids from different stages of one run show the
// same draws and stay comparable.
Tensor fixed_noise(std::uint64_t seed, std::size_t count) {
    RngStream rng(seed, "eval/noise");
    Tensor t({count, 128});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

Tensor run_generator(Model& gen, const Tensor& g_in) {
    Graph g;
    return g.value(gen.forward_eval(g, g.leaf(g_in)));
}

// Rows input / bicubic / label / generated for paired low-res runs; noise
// runs have no paired reference, so they get label / generated only.
void write_sample_grid(Model& gen, const ImageDataset& ds, std::uint64_t seed,
                       std::size_t grid_count, const std::string& path) {
    const std::size_t count = std::min<std::size_t>(grid_count, ds.size());
    const bool from_noise = gen.config().input_mode == InputMode::kNoise128;
    const Tensor g_in = from_noise ? fixed_noise(seed, count) : stack_inputs(ds, count);
    const Tensor generated = run_generator(gen, g_in);

    std::vector<std::vector<Tensor>> rows;
    if (!from_noise) {
        std::vector<Tensor> in_row, bi_row;
        const Tensor in_up = upsample_nearest(g_in, 4);
        const Tensor bi_up = bicubic_upsample_4x(g_in);
        for (std::size_t i = 0; i < count; ++i) in_row.push_back(nth_image(in_up, i));
        for (std::size_t i = 0; i < count; ++i) bi_row.push_back(nth_image(bi_up, i));
        rows.push_back(std::move(in_row));
        rows.push_back(std::move(bi_row));
    }
    std::vector<Tensor> label_row, gen_row;
    for (std::size_t i = 0; i < count; ++i) label_row.push_back(ds.label(i));
    for (std::size_t i = 0; i < count; ++i) gen_row.push_back(nth_image(generated, i));
    rows.push_back(std::move(label_row));
    rows.push_back(std::move(gen_row));
    emit_grid(rows, path);
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    RunConfig cfg = load_run_config(config_path);
    if (seed_override) cfg.train.seed = *seed_override;

    fs::create_directories(out_dir);
    const std::string resolved = resolved_config_json(cfg);
    write_text((fs::path(out_dir) / "resolved_config.json").string(), resolved);
    cfg.train.config_echo = resolved;

    Trainer trainer(cfg.train, open_dataset(cfg.data, cfg.train.seed));
    std::ofstream log((fs::path(out_dir) / "log.csv").string(), std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write log.csv in " + out_dir);
    write_log_header(log);

    auto emit_stage = [&](const std::string& tag) {
        trainer.save_checkpoint((fs::path(out_dir) / ("checkpoint_" + tag + ".bin")).string());
        write_sample_grid(trainer.generator(), trainer.dataset(), cfg.train.seed,
                          cfg.eval.grid_count,
                          (fs::path(out_dir) / ("samples_" + tag + ".png")).string());
    };

    const std::uint64_t total = cfg.train.total_g_iters;
    while (trainer.g_iter() < total) {
        TrainRecord rec = trainer.step();
        if (!cfg.train.log_wall_time) rec.wall_ms = 0;
        if (rec.g_iter % cfg.train.log_every == 0 || rec.g_iter == total)
            write_log_row(log, rec);
        if (cfg.train.checkpoint_every != 0 && rec.g_iter % cfg.train.checkpoint_every == 0 &&
            rec.g_iter != total)
            emit_stage(zero_padded(rec.g_iter));
    }
    emit_stage("final");
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_spec,
             const std::string& out_dir) {
    RunConfig cfg = parse_run_config(checkpoint_config_json(checkpoint_path));
    Model gen = Model::build(cfg.train.g_config, cfg.train.seed);
    load_model_params(gen, checkpoint_path, "g/");

    ImageDataset ds(data_spec, cfg.train.seed, cfg.data.label_size, cfg.data.crop_size);
    fs::create_directories(out_dir);

    const std::size_t n = ds.size();
    const bool from_noise = gen.config().input_mode == InputMode::kNoise128;
    const Tensor g_in = from_noise ? fixed_noise(cfg.train.seed, n) : stack_inputs(ds, n);
    const Tensor generated = run_generator(gen, g_in);
    const Tensor labels = stack_labels(ds, n);

    EvalReport rep;
    rep.duplicate_rate = n >= 2 ? duplicate_rate(generated, cfg.eval.duplicate_tau) : 0.0;
    if (!from_noise) {
        // Noise runs are unpaired, so the reference-based numbers only exist
        // on the low-res path.
        const Tensor bicubic = bicubic_upsample_4x(g_in);
        rep.l1 = l1_metric(generated, g_in);
        rep.psnr_db = psnr(generated, labels);
        rep.bicubic_l1 = l1_metric(bicubic, g_in);
        rep.bicubic_psnr_db = psnr(bicubic, labels);
    }
    write_text((fs::path(out_dir) / "report.json").string(), report_json(rep));
    write_sample_grid(gen, ds, cfg.train.seed, cfg.eval.grid_count,
                      (fs::path(out_dir) / "grid.png").string());
    return 0;
}

int cmd_toyw1(const std::string& out_dir) {
    const std::vector<ToyW1Row> rows = toy_w1_experiment(0);
    fs::create_directories(out_dir);

    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    std::vector<std::array<double, 3>> plot_rows;
    for (const ToyW1Row& r : rows) {
        j["rows"].push_back({{"shift", r.shift}, {"w1_exact", r.w1_exact}, {"neg_j_d", r.neg_j_d}});
        plot_rows.push_back({r.shift, r.w1_exact, r.neg_j_d});
    }
    write_text((fs::path(out_dir) / "w1_table.json").string(), j.dump(2) + "\n");
    emit_w1_plot(plot_rows, (fs::path(out_dir) / "w1_curve.svg").string());
    return 0;
}

int cmd_plot(const std::string& log_path, const std::string& out_path) {
    std::ifstream is(log_path, std::ios::binary);
    if (!is) throw IoError("cannot open " + log_path);
    const std::vector<TrainRecord> records = read_log_csv(is);
    if (records.empty()) throw ConfigError("no data rows in " + log_path);
    emit_curves(records, out_path);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"adversarial super-resolution laboratory"};
    app.require_subcommand(1);

    std::string config_path, train_out, checkpoint_path, data_spec, eval_out, toy_out, log_path,
        plot_out;
    std::uint64_t seed = 0;

    CLI::App* train = app.add_subcommand("train", "run one training job from a JSON config");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--out", train_out, "output directory")->required();
    CLI::Option* seed_opt = train->add_option("--seed", seed, "override the config seed");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_spec, "image directory or synth spec")->required();
    eval->add_option("--out", eval_out, "output directory")->required();

    CLI::App* toy = app.add_subcommand(
        "toyw1", "shifted-Gaussian critic experiment: estimate vs exact distance");
    toy->add_option("--out", toy_out, "output directory")->required();

    CLI::App* plot = app.add_subcommand("plot", "render training curves from a log.csv");
    plot->add_option("--log", log_path, "training log file")->required();
    plot->add_option("--out", plot_out, "output SVG path")->required();

    std::vector<const char*> argv;
    argv.push_back("asrl");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        check_thread_env();
        if (train->parsed())
            return cmd_train(config_path, train_out,
                             seed_opt->count() ? std::optional<std::uint64_t>(seed)
                                               : std::nullopt);
        if (eval->parsed()) return cmd_eval(checkpoint_path, data_spec, eval_out);
        if (toy->parsed()) return cmd_toyw1(toy_out);
        if (plot->parsed()) return cmd_plot(log_path, plot_out);
    } catch (const NumericsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace asrl
