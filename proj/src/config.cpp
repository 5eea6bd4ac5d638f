#include "asrl/config.hpp"

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <type_traits>
#include <utility>

#include "asrl/errors.hpp"
#include "json.hpp"

namespace asrl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

// One JSON object section. Getters consume keys; finish() rejects leftovers,
// which is what turns a typo into an error instead of a silent default.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    void number(const char* key, double* out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_number()) fail(at(key), "expected a number");
        *out = v->get<double>();
    }

    template <typename T>
    void count(const char* key, T* out) {
        static_assert(std::is_integral_v<T>);
        const json* v = take(key);
        if (!v) return;
        if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
            fail(at(key), "expected a nonnegative integer");
        *out = static_cast<T>(v->get<std::int64_t>());
    }

    void boolean(const char* key, bool* out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_boolean()) fail(at(key), "expected true or false");
        *out = v->get<bool>();
    }

    void text(const char* key, std::string* out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_string()) fail(at(key), "expected a string");
        *out = v->get<std::string>();
    }

    template <typename T>
    void choice(const char* key, T* out,
                std::initializer_list<std::pair<const char*, T>> options) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_string()) fail(at(key), "expected a string");
        const std::string s = v->get<std::string>();
        std::string expected;
        for (const auto& [name, value] : options) {
            if (s == name) {
                *out = value;
                return;
            }
            if (!expected.empty()) expected += "|";
            expected += name;
        }
        fail(at(key), "unknown value \"" + s + "\" (expected " + expected + ")");
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) fail(path_, "unknown key \"" + item.key() + "\"");
    }

    std::string at(const char* key) const { return path_ + "." + key; }

private:
    const json* take(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const json kEmptyObject = json::object();

const json& section_of(const json& root, const char* name) {
    auto it = root.find(name);
    return it == root.end() ? kEmptyObject : *it;
}

// Model fields common to both networks; role, head and image size are not
// spelled in JSON, they follow from the section name, the objective and the
// data geometry.
void parse_model(Section& s, ModelConfig* m) {
    s.choice("arch", &m->arch,
             {{"dcgan", Arch::kDcgan}, {"resnet", Arch::kResnet}, {"mlp", Arch::kMlp}});
    s.boolean("use_batchnorm", &m->use_batchnorm);
    s.choice("activation", &m->activation, {{"relu", Activation::kRelu}, {"tanh", Activation::kTanh}});
    s.count("base_channels", &m->base_channels);
    s.count("mlp_hidden", &m->mlp_hidden);
    s.number("bn_eps", &m->bn_eps);
    s.number("bn_momentum", &m->bn_momentum);
}

void check_positive(double v, const std::string& where) {
    if (!(v > 0.0)) fail(where, "must be positive");
}

void check_model(const ModelConfig& m, const std::string& path) {
    if (m.base_channels == 0) fail(path + ".base_channels", "must be positive");
    if (m.mlp_hidden == 0) fail(path + ".mlp_hidden", "must be positive");
    check_positive(m.bn_eps, path + ".bn_eps");
    if (!(m.bn_momentum >= 0.0 && m.bn_momentum < 1.0))
        fail(path + ".bn_momentum", "must lie in [0, 1)");
}

const char* kind_name(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::kGan: return "gan";
        case ObjectiveKind::kWgan: return "wgan";
        case ObjectiveKind::kWganGp: return "wgan_gp";
    }
    return "?";
}

const char* arch_name(Arch a) {
    switch (a) {
        case Arch::kDcgan: return "dcgan";
        case Arch::kResnet: return "resnet";
        case Arch::kMlp: return "mlp";
    }
    return "?";
}

const char* activation_name(Activation a) {
    return a == Activation::kRelu ? "relu" : "tanh";
}

const char* optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::kAdam: return "adam";
        case OptimizerKind::kRmsProp: return "rmsprop";
        case OptimizerKind::kSgd: return "sgd";
    }
    return "?";
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& item : root.items()) {
        static const std::set<std::string> known = {"objective", "generator", "discriminator",
                                                   "optimizer", "data",      "train",
                                                   "eval"};
        if (!known.count(item.key()))
            throw ConfigError("config: unknown section \"" + item.key() + "\"");
    }

    RunConfig cfg;
    ObjectiveConfig& obj = cfg.train.objective;

    Section objective(section_of(root, "objective"), "objective");
    objective.choice("kind", &obj.kind,
                     {{"gan", ObjectiveKind::kGan},
                      {"wgan", ObjectiveKind::kWgan},
                      {"wgan_gp", ObjectiveKind::kWganGp}});
    obj.n_critic = default_n_critic(obj.kind);
    objective.count("n_critic", &obj.n_critic);
    objective.number("lambda_gp", &obj.lambda_gp);
    objective.number("gamma_l1", &obj.gamma_l1);
    objective.number("clip_c", &obj.clip_c);
    objective.finish();

    if (obj.n_critic < 1) fail("objective.n_critic", "must be at least 1");
    if (obj.lambda_gp < 0.0) fail("objective.lambda_gp", "must be >= 0");
    if (!(obj.gamma_l1 >= 0.0 && obj.gamma_l1 <= 1.0)) fail("objective.gamma_l1", "must lie in [0, 1]");
    check_positive(obj.clip_c, "objective.clip_c");

    Section data(section_of(root, "data"), "data");
    data.text("source", &cfg.data.source);
    data.count("label_size", &cfg.data.label_size);
    data.count("crop_size", &cfg.data.crop_size);
    data.finish();

    if (cfg.data.label_size == 0 || cfg.data.label_size % 16 != 0)
        fail("data.label_size", "must be a positive multiple of 16 (the networks halve it four times)");
    if (cfg.data.crop_size == 0 || cfg.data.crop_size % cfg.data.label_size != 0)
        fail("data.crop_size", "must be a positive multiple of data.label_size");
    if (cfg.data.source.empty()) fail("data.source", "must not be empty");

    ModelConfig& g = cfg.train.g_config;
    ModelConfig& d = cfg.train.d_config;

    Section generator(section_of(root, "generator"), "generator");
    parse_model(generator, &g);
    generator.choice("input_mode", &g.input_mode,
                     {{"lowres", InputMode::kLowresImage}, {"noise128", InputMode::kNoise128}});
    generator.finish();
    g.role = Role::kGenerator;
    g.output_activation = OutputActivation::kTanh;
    g.image_size = cfg.data.label_size;
    check_model(g, "generator");
    if (g.input_mode == InputMode::kNoise128 && obj.gamma_l1 != 0.0)
        fail("objective.gamma_l1",
             "must be 0 when generator.input_mode is \"noise128\" (no low-res reference to "
             "reconstruct)");
    if (g.input_mode == InputMode::kNoise128 && g.arch != Arch::kDcgan)
        fail("generator.input_mode", "\"noise128\" requires generator.arch \"dcgan\"");

    Section discriminator(section_of(root, "discriminator"), "discriminator");
    parse_model(discriminator, &d);
    discriminator.finish();
    d.role = Role::kDiscriminator;
    d.input_mode = InputMode::kLowresImage;
    d.output_activation =
        obj.kind == ObjectiveKind::kGan ? OutputActivation::kSigmoid : OutputActivation::kLinear;
    d.image_size = cfg.data.label_size;
    check_model(d, "discriminator");

    OptimizerConfig opt = default_optimizer_for(obj.kind);
    Section optimizer(section_of(root, "optimizer"), "optimizer");
    optimizer.choice("kind", &opt.kind,
                     {{"adam", OptimizerKind::kAdam},
                      {"rmsprop", OptimizerKind::kRmsProp},
                      {"sgd", OptimizerKind::kSgd}});
    optimizer.number("alpha", &opt.alpha);
    optimizer.number("beta1", &opt.beta1);
    optimizer.number("beta2", &opt.beta2);
    optimizer.number("rho", &opt.rho);
    optimizer.number("eps", &opt.eps);
    optimizer.finish();

    check_positive(opt.alpha, "optimizer.alpha");
    if (!(opt.beta1 >= 0.0 && opt.beta1 < 1.0)) fail("optimizer.beta1", "must lie in [0, 1)");
    if (!(opt.beta2 >= 0.0 && opt.beta2 < 1.0)) fail("optimizer.beta2", "must lie in [0, 1)");
    if (!(opt.rho > 0.0 && opt.rho < 1.0)) fail("optimizer.rho", "must lie in (0, 1)");
    check_positive(opt.eps, "optimizer.eps");
    cfg.train.g_optimizer = opt;
    cfg.train.d_optimizer = opt;

    Section train(section_of(root, "train"), "train");
    train.count("batch_size", &cfg.train.batch_size);
    train.count("total_g_iters", &cfg.train.total_g_iters);
    train.count("log_every", &cfg.train.log_every);
    train.count("checkpoint_every", &cfg.train.checkpoint_every);
    train.count("seed", &cfg.train.seed);
    train.boolean("log_wall_time", &cfg.train.log_wall_time);
    train.finish();

    if (cfg.train.batch_size == 0) fail("train.batch_size", "must be at least 1");
    if (cfg.train.total_g_iters == 0) fail("train.total_g_iters", "must be at least 1");
    if (cfg.train.log_every == 0) fail("train.log_every", "must be at least 1");
    if ((g.use_batchnorm || d.use_batchnorm) && cfg.train.batch_size < 2)
        fail("train.batch_size", "must be at least 2 when batch norm is enabled");

    Section eval(section_of(root, "eval"), "eval");
    eval.number("duplicate_tau", &cfg.eval.duplicate_tau);
    eval.count("grid_count", &cfg.eval.grid_count);
    eval.finish();

    check_positive(cfg.eval.duplicate_tau, "eval.duplicate_tau");
    if (cfg.eval.grid_count == 0) fail("eval.grid_count", "must be at least 1");

    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
    const ObjectiveConfig& obj = cfg.train.objective;
    const ModelConfig& g = cfg.train.g_config;
    const ModelConfig& d = cfg.train.d_config;
    const OptimizerConfig opt =
        cfg.train.g_optimizer ? *cfg.train.g_optimizer : default_optimizer_for(obj.kind);

    nlohmann::ordered_json j;
    j["objective"] = {{"kind", kind_name(obj.kind)},
                      {"n_critic", obj.n_critic},
                      {"lambda_gp", obj.lambda_gp},
                      {"gamma_l1", obj.gamma_l1},
                      {"clip_c", obj.clip_c}};
    j["generator"] = {{"arch", arch_name(g.arch)},
                      {"input_mode", g.input_mode == InputMode::kNoise128 ? "noise128" : "lowres"},
                      {"use_batchnorm", g.use_batchnorm},
                      {"activation", activation_name(g.activation)},
                      {"base_channels", g.base_channels},
                      {"mlp_hidden", g.mlp_hidden},
                      {"bn_eps", g.bn_eps},
                      {"bn_momentum", g.bn_momentum}};
    j["discriminator"] = {{"arch", arch_name(d.arch)},
                          {"use_batchnorm", d.use_batchnorm},
                          {"activation", activation_name(d.activation)},
                          {"base_channels", d.base_channels},
                          {"mlp_hidden", d.mlp_hidden},
                          {"bn_eps", d.bn_eps},
                          {"bn_momentum", d.bn_momentum}};
    j["optimizer"] = {{"kind", optimizer_name(opt.kind)}, {"alpha", opt.alpha},
                      {"beta1", opt.beta1},               {"beta2", opt.beta2},
                      {"rho", opt.rho},                   {"eps", opt.eps}};
    j["data"] = {{"source", cfg.data.source},
                 {"label_size", cfg.data.label_size},
                 {"crop_size", cfg.data.crop_size}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"total_g_iters", cfg.train.total_g_iters},
                  {"log_every", cfg.train.log_every},
                  {"checkpoint_every", cfg.train.checkpoint_every},
                  {"seed", cfg.train.seed},
                  {"log_wall_time", cfg.train.log_wall_time}};
    j["eval"] = {{"duplicate_tau", cfg.eval.duplicate_tau}, {"grid_count", cfg.eval.grid_count}};
    return j.dump(2) + "\n";
}

ImageDataset open_dataset(const DataConfig& data, std::uint64_t seed) {
    return ImageDataset(data.source, seed, data.label_size, data.crop_size);
}

}  // namespace asrl
