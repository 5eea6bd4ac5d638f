#include "asrl/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "asrl/errors.hpp"

namespace asrl {

double byte_to_unit(unsigned char v) { return static_cast<double>(v) / 127.5 - 1.0; }

unsigned char unit_to_byte(double x) {
    const double v = std::lround((x + 1.0) * 127.5);
    return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({3, img.height, img.width});
    const std::size_t plane = img.height * img.width;
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < 3; ++c) t[c * plane + p] = byte_to_unit(img.rgb[3 * p + c]);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError("tensor_to_image: want [3,h,w], got " + shape_str(t.shape()));
    Image img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    const std::size_t plane = img.height * img.width;
    img.rgb.resize(3 * plane);
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < 3; ++c) img.rgb[3 * p + c] = unit_to_byte(t[c * plane + p]);
    return img;
}

Tensor block_downsample(const Tensor& t, int factor) {
    Graph g;
    Tensor out = g.value(avg_pool(g, g.leaf(t), factor));
    return out;
}

Tensor upsample_nearest(const Tensor& t, int factor) {
    Graph g;
    Tensor out = g.value(nearest_up(g, g.leaf(t), factor));
    return out;
}

namespace {

// Catmull-Rom weight, a = -0.5, support |d| < 2.
double cubic_w(double d) {
    d = std::fabs(d);
    if (d <= 1.0) return (1.5 * d - 2.5) * d * d + 1.0;
    if (d < 2.0) return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0;
    return 0.0;
}

// Mirror an out-of-range index about the edge pixel (no edge duplication).
std::size_t reflect(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

// One separable pass along the last dim: [rows, n] -> [rows, 4n].
void bicubic_pass_1d(const double* src, double* dst, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = src + r * n;
        double* out = dst + r * 4 * n;
        for (std::size_t o = 0; o < 4 * n; ++o) {
            const double pos = (static_cast<double>(o) + 0.5) / 4.0 - 0.5;
            const long base = static_cast<long>(std::floor(pos));
            const double t = pos - static_cast<double>(base);
            double acc = 0.0;
            for (long k = -1; k <= 2; ++k)
                acc += cubic_w(t - static_cast<double>(k)) *
                       in[reflect(base + k, static_cast<long>(n))];
            out[o] = acc;
        }
    }
}

}  // namespace

Tensor bicubic_upsample_4x(const Tensor& t) {
    if (t.rank() < 2)
        throw ShapeError("bicubic_upsample_4x: need at least 2 dims, got " + shape_str(t.shape()));
    const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
    std::size_t outer = 1;
    for (std::size_t d = 0; d + 2 < t.rank(); ++d) outer *= t.dim(d);

    std::vector<std::size_t> oshape = t.shape();
    oshape[t.rank() - 2] = 4 * h;
    oshape[t.rank() - 1] = 4 * w;
    Tensor out(oshape);

    // Rows first, then columns on the transposed intermediate.
    std::vector<double> wide(h * 4 * w), wide_t(4 * w * h), tall_t(4 * w * 4 * h);
    for (std::size_t o = 0; o < outer; ++o) {
        bicubic_pass_1d(t.data() + o * h * w, wide.data(), h, w);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < 4 * w; ++x) wide_t[x * h + y] = wide[y * 4 * w + x];
        bicubic_pass_1d(wide_t.data(), tall_t.data(), 4 * w, h);
        double* oimg = out.data() + o * 4 * h * 4 * w;
        for (std::size_t x = 0; x < 4 * w; ++x)
            for (std::size_t y = 0; y < 4 * h; ++y) oimg[y * 4 * w + x] = tall_t[x * 4 * h + y];
    }
    return out;
}

namespace {

Tensor crop_tensor(const Tensor& t, std::size_t oy, std::size_t ox, std::size_t c) {
    const std::size_t h = t.dim(1), w = t.dim(2);
    Tensor out({3, c, c});
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < c; ++y)
            std::memcpy(out.data() + (ch * c + y) * c, t.data() + (ch * h + oy + y) * w + ox,
                        c * sizeof(double));
    return out;
}

Tensor synth_ramp(RngStream& r, std::size_t s) {
    Tensor t({3, s, s});
    double c0[3], c1[3];
    for (double& v : c0) v = 2.0 * r.uniform() - 1.0;
    for (double& v : c1) v = 2.0 * r.uniform() - 1.0;
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double u = static_cast<double>(x) / static_cast<double>(s - 1);
                t[(ch * s + y) * s + x] = c0[ch] + (c1[ch] - c0[ch]) * u;
            }
    return t;
}

Tensor synth_checker(RngStream& r, std::size_t s) {
    Tensor t({3, s, s});
    const std::size_t cell = 8 + r.below(25);
    const std::size_t py = r.below(cell), px = r.below(cell);
    double c0[3], c1[3];
    for (double& v : c0) v = 2.0 * r.uniform() - 1.0;
    for (double& v : c1) v = 2.0 * r.uniform() - 1.0;
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const bool odd = (((y + py) / cell) + ((x + px) / cell)) % 2 != 0;
                t[(ch * s + y) * s + x] = odd ? c1[ch] : c0[ch];
            }
    return t;
}

Tensor synth_blobs(RngStream& r, std::size_t s) {
    Tensor t({3, s, s});
    double bg[3];
    for (double& v : bg) v = -1.0 + 0.5 * r.uniform();
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t p = 0; p < s * s; ++p) t[ch * s * s + p] = bg[ch];
    const std::size_t nblobs = 3 + r.below(4);
    for (std::size_t b = 0; b < nblobs; ++b) {
        const double cy = r.uniform() * static_cast<double>(s);
        const double cx = r.uniform() * static_cast<double>(s);
        const double sigma = (static_cast<double>(s) / 16.0) * (1.0 + r.uniform());
        double col[3];
        for (double& v : col) v = 2.0 * r.uniform() - 1.0;
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    double& px = t[(ch * s + y) * s + x];
                    px = std::clamp(px + w * (col[ch] - bg[ch]), -1.0, 1.0);
                }
            }
    }
    return t;
}

}  // namespace

ImageDataset::ImageDataset(const std::string& source, std::uint64_t seed, std::size_t label_size,
                           std::size_t crop_size)
    : seed_(seed), label_px_(label_size) {
    if (label_px_ == 0 || label_px_ % 4 != 0)
        throw ConfigError("dataset: label size must be a positive multiple of 4, got " +
                          std::to_string(label_px_));
    if (crop_size == 0 || crop_size % label_px_ != 0)
        throw ConfigError("dataset: crop size " + std::to_string(crop_size) +
                          " must be a multiple of label size " + std::to_string(label_px_));
    const int resize_factor = static_cast<int>(crop_size / label_px_);

    std::vector<Tensor> sources;
    std::vector<std::string> names;
    if (source.rfind("synth:", 0) == 0) {
        std::string rest = source.substr(6);
        std::string kind = rest;
        std::size_t count = 64;
        if (auto colon = rest.find(':'); colon != std::string::npos) {
            kind = rest.substr(0, colon);
            try {
                count = std::stoul(rest.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError("dataset: bad synthetic count in \"" + source + "\"");
            }
        }
        if (count == 0) throw ConfigError("dataset: synthetic count must be positive");
        Tensor (*gen)(RngStream&, std::size_t) = nullptr;
        if (kind == "ramp") gen = synth_ramp;
        else if (kind == "checker") gen = synth_checker;
        else if (kind == "blobs") gen = synth_blobs;
        else
            throw ConfigError("dataset: unknown synthetic kind \"" + kind +
                              "\" (want ramp|checker|blobs)");
        // Oversize the canvas so the seeded crop box actually moves.
        const std::size_t canvas = crop_size + 32;
        for (std::size_t i = 0; i < count; ++i) {
            RngStream r(seed, "data/synth/" + std::to_string(i));
            sources.push_back(gen(r, canvas));
            names.push_back(source + "[" + std::to_string(i) + "]");
        }
    } else {
        namespace fs = std::filesystem;
        std::error_code ec;
        if (!fs::is_directory(source, ec))
            throw IoError("dataset: \"" + source + "\" is not a directory or synth spec");
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(source)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png")
                paths.push_back(entry.path().string());
        }
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) throw IoError("dataset: no .png files in " + source);
        for (const auto& p : paths) {
            sources.push_back(image_to_tensor(read_png(p)));
            names.push_back(p);
        }
    }

    RngStream crop_rng(seed, "data/crop");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const Tensor& src = sources[i];
        const std::size_t h = src.dim(1), w = src.dim(2);
        if (h < crop_size || w < crop_size)
            throw IoError("dataset: " + names[i] + " is " + std::to_string(w) + "x" +
                          std::to_string(h) + ", smaller than the " + std::to_string(crop_size) +
                          " crop box");
        const std::size_t oy = crop_rng.below(h - crop_size + 1);
        const std::size_t ox = crop_rng.below(w - crop_size + 1);
        Tensor cropped = crop_tensor(src, oy, ox, crop_size);
        Tensor lab = resize_factor > 1 ? block_downsample(cropped, resize_factor)
                                       : std::move(cropped);
        inputs_.push_back(downsample_4x(lab));
        labels_.push_back(std::move(lab));
    }
    start_epoch();
}

void ImageDataset::start_epoch() {
    RngStream r(seed_, "data/order/" + std::to_string(state_.epoch));
    order_ = r.permutation(size());
}

Batch ImageDataset::next_batch(std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("next_batch: batch size must be positive");
    if (batch_size > size())
        throw ConfigError("next_batch: batch size " + std::to_string(batch_size) +
                          " exceeds dataset size " + std::to_string(size()));
    if (state_.pos + batch_size > size()) {
        ++state_.epoch;
        state_.pos = 0;
        start_epoch();
    }
    const std::size_t in_px = input_size();
    Batch b;
    b.inputs = Tensor({batch_size, 3, in_px, in_px});
    b.labels = Tensor({batch_size, 3, label_px_, label_px_});
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t idx = order_[state_.pos + i];
        std::memcpy(b.inputs.data() + i * inputs_[idx].size(), inputs_[idx].data(),
                    inputs_[idx].size() * sizeof(double));
        std::memcpy(b.labels.data() + i * labels_[idx].size(), labels_[idx].data(),
                    labels_[idx].size() * sizeof(double));
    }
    state_.pos += batch_size;
    return b;
}

void ImageDataset::set_state(DatasetState s) {
    if (s.pos > size())
        throw ConfigError("dataset state: position " + std::to_string(s.pos) +
                          " exceeds dataset size " + std::to_string(size()));
    state_ = s;
    start_epoch();
}

}  // namespace asrl
