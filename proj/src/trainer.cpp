#include "asrl/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <unordered_map>

#include "asrl/autodiff.hpp"
#include "asrl/errors.hpp"
#include "asrl/evalkit.hpp"

namespace asrl {

namespace fs = std::filesystem;

namespace {

const TrainConfig& validated(const TrainConfig& cfg) {
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (cfg.total_g_iters == 0) throw ConfigError("total_g_iters must be positive");
    if (cfg.log_every == 0) throw ConfigError("log_every must be positive");
    if (cfg.objective.n_critic < 1) throw ConfigError("n_critic must be at least 1");
    if (cfg.objective.gamma_l1 < 0.0 || cfg.objective.gamma_l1 > 1.0)
        throw ConfigError("gamma_l1 must lie in [0,1]");
    if (cfg.objective.kind == ObjectiveKind::kWganGp && cfg.objective.lambda_gp < 0.0)
        throw ConfigError("lambda_gp must be nonnegative");
    if (cfg.objective.kind == ObjectiveKind::kWgan && cfg.objective.clip_c <= 0.0)
        throw ConfigError("clip_c must be positive");
    if (cfg.g_config.role != Role::kGenerator)
        throw ConfigError("g_config must have the generator role");
    if (cfg.d_config.role != Role::kDiscriminator)
        throw ConfigError("d_config must have the discriminator role");
    if (cfg.g_config.image_size != cfg.d_config.image_size)
        throw ConfigError("generator and discriminator image sizes differ");
    if (cfg.objective.kind == ObjectiveKind::kGan) {
        if (cfg.d_config.output_activation != OutputActivation::kSigmoid)
            throw ConfigError("the classic objective needs a sigmoid discriminator head");
    } else if (cfg.d_config.output_activation != OutputActivation::kLinear) {
        throw ConfigError("Wasserstein objectives need a linear critic head");
    }
    if (cfg.g_config.input_mode == InputMode::kNoise128 && cfg.objective.gamma_l1 != 0.0)
        throw ConfigError(
            "the reconstruction term needs a low-res generator input; "
            "set gamma_l1 to 0 for noise input");
    if ((cfg.g_config.use_batchnorm || cfg.d_config.use_batchnorm) && cfg.batch_size < 2)
        throw ConfigError("batch-norm needs batch_size >= 2");
    return cfg;
}

// Grad pointers in store order for Optimizer::step. Zero leaves are appended
// for trainable parameters the loss does not reach, so the pointers must be
// taken only after every append.
std::vector<const Tensor*> gather_grads(Graph& g, const GradientMap& grads,
                                        const ParamStore& store,
                                        const std::vector<NodeId>& bound) {
    std::vector<NodeId> ids(store.size(), kNoNode);
    for (std::size_t i = 0; i < store.size(); ++i)
        if (store[i].trainable) ids[i] = grad_or_zero(g, grads, bound[i]);
    std::vector<const Tensor*> out(store.size(), nullptr);
    for (std::size_t i = 0; i < store.size(); ++i)
        if (ids[i] != kNoNode) out[i] = &g.value(ids[i]);
    return out;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, ImageDataset dataset)
    : cfg_(validated(cfg)),
      data_(std::move(dataset)),
      gen_(Model::build(cfg_.g_config, cfg_.seed)),
      disc_(Model::build(cfg_.d_config, cfg_.seed)),
      opt_g_(cfg_.g_optimizer.value_or(default_optimizer_for(cfg_.objective.kind)),
             gen_.params()),
      opt_d_(cfg_.d_optimizer.value_or(default_optimizer_for(cfg_.objective.kind)),
             disc_.params()),
      eps_rng_(cfg_.seed, "train/eps"),
      noise_rng_(cfg_.seed, "train/noise") {
    if (gen_.parameter_count() == 0) throw ConfigError("generator has no trainable parameters");
    if (disc_.parameter_count() == 0)
        throw ConfigError("discriminator has no trainable parameters");
    if (data_.label_size() != cfg_.g_config.image_size)
        throw ConfigError("dataset label size " + std::to_string(data_.label_size()) +
                          " does not match model image size " +
                          std::to_string(cfg_.g_config.image_size));
    if (cfg_.g_config.image_channels != 3 || cfg_.d_config.image_channels != 3)
        throw ConfigError("the dataset provides 3-channel images");
    if (data_.size() < cfg_.batch_size)
        throw ConfigError("batch_size " + std::to_string(cfg_.batch_size) +
                          " exceeds the dataset size " + std::to_string(data_.size()));
    if (cfg_.objective.kind == ObjectiveKind::kWganGp && cfg_.d_config.use_batchnorm)
        std::fprintf(stderr,
                     "warning: batch-norm in the critic couples samples through batch "
                     "statistics, which blurs the per-sample gradient penalty; consider "
                     "use_batchnorm=false for the discriminator\n");
}

void Trainer::ensure_finite(double v, const char* term) const {
    if (std::isfinite(v)) return;
    throw NumericsError("training aborted at g_iter " + std::to_string(g_iter_ + 1) +
                        ": non-finite " + std::string(term));
}

Tensor Trainer::generator_input(const Batch& batch) {
    if (cfg_.g_config.input_mode == InputMode::kLowresImage) return batch.inputs;
    Tensor noise(gen_.input_shape(batch.labels.dim(0)));
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = noise_rng_.normal();
    return noise;
}

Tensor Trainer::generate_fake(const Tensor& g_in) {
    Graph g;
    NodeId out = gen_.forward(g, gen_.bind(g), g.leaf(g_in), BnMode::kFrozen);
    return g.value(out);
}

double Trainer::critic_step() {
    if (!phase_open_) {
        phase_open_ = true;
        phase_start_ = std::chrono::steady_clock::now();
    }
    Batch batch = data_.next_batch(cfg_.batch_size);
    Tensor fake_val = generate_fake(generator_input(batch));

    Graph g;
    std::vector<NodeId> db = disc_.bind(g);
    NodeId x_real = g.leaf(batch.labels);
    NodeId x_fake = g.leaf(std::move(fake_val));
    NodeId d_real = disc_.forward(g, db, x_real, BnMode::kTrain);
    NodeId d_fake = disc_.forward(g, db, x_fake, BnMode::kFrozen);

    NodeId j_d = kNoNode;
    switch (cfg_.objective.kind) {
        case ObjectiveKind::kGan:
            j_d = gan_d_loss(g, d_real, d_fake);
            break;
        case ObjectiveKind::kWgan:
            j_d = wgan_d_loss(g, d_real, d_fake);
            break;
        case ObjectiveKind::kWganGp: {
            Tensor eps({batch.labels.dim(0)});
            for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = eps_rng_.uniform();
            NodeId xhat = interpolate(g, x_real, x_fake, g.leaf(std::move(eps)));
            NodeId d_hat = disc_.forward(g, db, xhat, BnMode::kFrozen);
            NodeId pen = grad_norm_penalty(g, d_hat, xhat);
            ensure_finite(g.value(pen)[0], "gradient penalty");
            j_d = wgan_gp_d_loss(g, d_real, d_fake, pen, cfg_.objective.lambda_gp);
            break;
        }
    }
    const double jd_val = g.value(j_d)[0];
    ensure_finite(jd_val, "discriminator loss");

    GradientMap grads = backward(g, j_d);
    opt_d_.step(disc_.params(), gather_grads(g, grads, disc_.params(), db));
    ++d_steps_;

    if (cfg_.objective.kind == ObjectiveKind::kWgan) {
        clip_weights(disc_.params(), cfg_.objective.clip_c);
        ++clip_calls_;
    }
    last_jd_ = jd_val;
    return jd_val;
}

TrainRecord Trainer::generator_step() {
    const auto start = phase_open_ ? phase_start_ : std::chrono::steady_clock::now();
    phase_open_ = false;
    Batch batch = data_.next_batch(cfg_.batch_size);
    Graph g;
    std::vector<NodeId> gb = gen_.bind(g);
    std::vector<NodeId> db = disc_.bind(g);
    NodeId gin = g.leaf(generator_input(batch));
    NodeId fake = gen_.forward(g, gb, gin, BnMode::kTrain);
    Tensor fake_snapshot = g.value(fake);
    NodeId d_fake = disc_.forward(g, db, fake, BnMode::kFrozen);
    NodeId j_g = cfg_.objective.kind == ObjectiveKind::kGan ? gan_g_loss(g, d_fake)
                                                            : wgan_g_loss(g, d_fake);
    const double jg_val = g.value(j_g)[0];
    ensure_finite(jg_val, "generator adversarial loss");

    NodeId total = j_g;
    double l1_rec = 0.0;
    if (cfg_.g_config.input_mode == InputMode::kLowresImage) {
        l1_rec = l1_metric(fake_snapshot, batch.inputs);
        if (cfg_.objective.gamma_l1 > 0.0) {
            NodeId z = g.leaf(batch.inputs);
            NodeId l1 = l1_term(g, avg_pool(g, fake, 4), z);
            ensure_finite(g.value(l1)[0], "reconstruction loss");
            total = total_g_loss(g, j_g, l1, cfg_.objective.gamma_l1);
            ensure_finite(g.value(total)[0], "total generator loss");
        }
    }

    GradientMap grads = backward(g, total);
    opt_g_.step(gen_.params(), gather_grads(g, grads, gen_.params(), gb));

    ++g_iter_;
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return {g_iter_, last_jd_, jg_val, l1_rec, static_cast<std::uint64_t>(wall.count())};
}

TrainRecord Trainer::step() {
    for (int k = 0; k < cfg_.objective.n_critic; ++k) critic_step();
    return generator_step();
}

std::vector<TrainRecord> Trainer::run(std::ostream* log_out, const std::string& checkpoint_dir) {
    if (log_out && g_iter_ == 0) write_log_header(*log_out);
    std::vector<TrainRecord> rows;
    while (g_iter_ < cfg_.total_g_iters) {
        TrainRecord rec = step();
        if (!cfg_.log_wall_time) rec.wall_ms = 0;
        if (rec.g_iter % cfg_.log_every == 0 || rec.g_iter == cfg_.total_g_iters) {
            rows.push_back(rec);
            if (log_out) {
                write_log_row(*log_out, rec);
                log_out->flush();
            }
        }
        if (!checkpoint_dir.empty() && cfg_.checkpoint_every > 0 &&
            rec.g_iter % cfg_.checkpoint_every == 0 && rec.g_iter != cfg_.total_g_iters) {
            char name[40];
            std::snprintf(name, sizeof(name), "checkpoint_%06llu.bin",
                          static_cast<unsigned long long>(rec.g_iter));
            save_checkpoint((fs::path(checkpoint_dir) / name).string());
        }
    }
    if (!checkpoint_dir.empty())
        save_checkpoint((fs::path(checkpoint_dir) / "checkpoint_final.bin").string());
    return rows;
}

// Checkpoint layout: "ASRL", u32 format version, u64 blob count, then per blob
// u32 name length, name bytes, u32 rank, u64 dims, f64 values, and finally a
// crc32 (zlib polynomial) of all preceding bytes. Everything little-endian.
static_assert(std::endian::native == std::endian::little,
              "the checkpoint format assumes a little-endian host");

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, sizeof v); }
void put_u64(std::string& out, std::uint64_t v) { put_bytes(out, &v, sizeof v); }

void put_blob(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d = 0; d < t.rank(); ++d) put_u64(out, t.dim(d));
    put_bytes(out, t.data(), t.size() * sizeof(double));
}

// Cursor-based reader over the verified body; every overrun is a truncation.
struct BlobReader {
    const std::string& buf;
    std::size_t pos;
    std::size_t limit;
    const std::string& path;

    void need(std::size_t n) const {
        if (limit - pos < n) throw IoError("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
};

using BlobMap = std::unordered_map<std::string, Tensor>;

BlobMap parse_blobs(const std::string& buf, std::size_t limit, const std::string& path) {
    BlobReader r{buf, 8, limit, path};
    const std::uint64_t count = r.u64();
    BlobMap blobs;
    for (std::uint64_t n = 0; n < count; ++n) {
        const std::uint32_t name_len = r.u32();
        r.need(name_len);
        std::string name(buf, r.pos, name_len);
        r.pos += name_len;
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw IoError("corrupt checkpoint blob " + name + ": " + path);
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = r.u64();
            if (d != 0 && total > limit / sizeof(double) / d)
                throw IoError("corrupt checkpoint blob " + name + ": " + path);
            total *= d;
        }
        r.need(total * sizeof(double));
        Tensor t(shape);
        std::memcpy(t.data(), buf.data() + r.pos, t.size() * sizeof(double));
        r.pos += t.size() * sizeof(double);
        if (!blobs.emplace(std::move(name), std::move(t)).second)
            throw IoError("duplicate checkpoint blob: " + path);
    }
    if (r.pos != limit) throw IoError("checkpoint has trailing bytes: " + path);
    return blobs;
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    std::string body;
    std::uint64_t count = 0;
    auto add = [&](const std::string& name, const Tensor& t) {
        put_blob(body, name, t);
        ++count;
    };
    const ParamStore& gs = gen_.params();
    const ParamStore& ds = disc_.params();
    for (std::size_t i = 0; i < gs.size(); ++i) add("g/" + gs[i].name, gs[i].value);
    for (std::size_t i = 0; i < ds.size(); ++i) add("d/" + ds[i].name, ds[i].value);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        add("opt_g/m/" + gs[i].name, opt_g_.moment1()[i]);
        add("opt_g/v/" + gs[i].name, opt_g_.moment2()[i]);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        add("opt_d/m/" + ds[i].name, opt_d_.moment1()[i]);
        add("opt_d/v/" + ds[i].name, opt_d_.moment2()[i]);
    }
    auto add_scalar = [&](const char* name, std::uint64_t v) {
        add(name, Tensor::scalar(static_cast<double>(v)));
    };
    add_scalar("state/g_iter", g_iter_);
    add_scalar("state/d_steps", d_steps_);
    add_scalar("state/clip_calls", clip_calls_);
    add_scalar("state/opt_g_t", opt_g_.step_count());
    add_scalar("state/opt_d_t", opt_d_.step_count());
    add_scalar("state/eps_counter", eps_rng_.counter());
    add_scalar("state/noise_counter", noise_rng_.counter());
    add_scalar("state/data_epoch", data_.state().epoch);
    add_scalar("state/data_pos", data_.state().pos);
    if (!cfg_.config_echo.empty()) {
        Tensor text({cfg_.config_echo.size()});
        for (std::size_t i = 0; i < text.size(); ++i)
            text[i] = static_cast<double>(static_cast<unsigned char>(cfg_.config_echo[i]));
        add("meta/config", text);
    }

    std::string out;
    put_bytes(out, "ASRL", 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, count);
    out += body;
    const auto crc =
        crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size()));
    put_u32(out, static_cast<std::uint32_t>(crc));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("short write on checkpoint: " + path);
}

namespace {

// Shared front half of every reader: load, verify magic, version and
// checksum, then split into named tensors.
BlobMap read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 20) throw IoError("truncated checkpoint: " + path);
    if (std::memcmp(buf.data(), "ASRL", 4) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 4, 4);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint format version " + std::to_string(version) +
                      ": " + path);
    const std::size_t body_end = buf.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + body_end, 4);
    const auto crc =
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body_end));
    if (static_cast<std::uint32_t>(crc) != stored_crc)
        throw IoError("checkpoint checksum mismatch: " + path);
    return parse_blobs(buf, body_end, path);
}

}  // namespace

void Trainer::load_checkpoint(const std::string& path) {
    BlobMap blobs = read_checkpoint(path);
    // The embedded configuration text is informational; resume state is
    // validated structurally below.
    blobs.erase("meta/config");

    // Validate every expected blob against the live configuration before
    // touching any state, so a mismatched file changes nothing.
    std::size_t expected = 0;
    auto take = [&](const std::string& name, const std::vector<std::size_t>& shape) -> Tensor& {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw IoError("checkpoint is missing " + name + ": " + path);
        if (it->second.shape() != shape)
            throw IoError("checkpoint tensor " + name + " has shape " +
                          shape_str(it->second.shape()) + ", expected " + shape_str(shape) +
                          ": " + path);
        return it->second;
    };
    ParamStore& gs = gen_.params();
    ParamStore& ds = disc_.params();
    auto visit = [&](bool apply) {
        expected = 0;
        auto want = [&](const std::string& name, Tensor& dst) {
            Tensor& src = take(name, dst.shape());
            ++expected;
            if (apply) dst = std::move(src);
        };
        for (std::size_t i = 0; i < gs.size(); ++i) want("g/" + gs[i].name, gs[i].value);
        for (std::size_t i = 0; i < ds.size(); ++i) want("d/" + ds[i].name, ds[i].value);
        for (std::size_t i = 0; i < gs.size(); ++i) {
            want("opt_g/m/" + gs[i].name, opt_g_.moment1()[i]);
            want("opt_g/v/" + gs[i].name, opt_g_.moment2()[i]);
        }
        for (std::size_t i = 0; i < ds.size(); ++i) {
            want("opt_d/m/" + ds[i].name, opt_d_.moment1()[i]);
            want("opt_d/v/" + ds[i].name, opt_d_.moment2()[i]);
        }
    };
    visit(false);
    auto scalar = [&](const char* name) {
        ++expected;
        return static_cast<std::uint64_t>(take(name, {})[0]);
    };
    const std::uint64_t it_g = scalar("state/g_iter");
    const std::uint64_t it_d = scalar("state/d_steps");
    const std::uint64_t clips = scalar("state/clip_calls");
    const std::uint64_t t_g = scalar("state/opt_g_t");
    const std::uint64_t t_d = scalar("state/opt_d_t");
    const std::uint64_t eps_c = scalar("state/eps_counter");
    const std::uint64_t noise_c = scalar("state/noise_counter");
    DatasetState dstate{scalar("state/data_epoch"), scalar("state/data_pos")};
    if (blobs.size() != expected)
        throw IoError("checkpoint does not match the run configuration: " + path);

    visit(true);
    g_iter_ = it_g;
    d_steps_ = it_d;
    clip_calls_ = clips;
    opt_g_.set_step_count(t_g);
    opt_d_.set_step_count(t_d);
    eps_rng_.set_counter(eps_c);
    noise_rng_.set_counter(noise_c);
    data_.set_state(dstate);
}

std::string checkpoint_config_json(const std::string& path) {
    BlobMap blobs = read_checkpoint(path);
    auto it = blobs.find("meta/config");
    if (it == blobs.end())
        throw IoError("checkpoint carries no embedded run configuration: " + path);
    const Tensor& t = it->second;
    std::string text(t.size(), '\0');
    for (std::size_t i = 0; i < t.size(); ++i)
        text[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
    return text;
}

void load_model_params(Model& model, const std::string& path, const std::string& prefix) {
    BlobMap blobs = read_checkpoint(path);
    ParamStore& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string name = prefix + ps[i].name;
        auto it = blobs.find(name);
        if (it == blobs.end()) throw IoError("checkpoint is missing " + name + ": " + path);
        if (it->second.shape() != ps[i].value.shape())
            throw IoError("checkpoint tensor " + name + " has shape " +
                          shape_str(it->second.shape()) + ", expected " +
                          shape_str(ps[i].value.shape()) + ": " + path);
    }
    for (std::size_t i = 0; i < ps.size(); ++i)
        ps[i].value = std::move(blobs.at(prefix + ps[i].name));
}

}  // namespace asrl
