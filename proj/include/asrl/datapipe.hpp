#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asrl/graph.hpp"
#include "asrl/rng.hpp"
#include "asrl/tensor.hpp"

namespace asrl {

// 8-bit interleaved RGB, row-major.
struct Image {
    std::size_t height = 0, width = 0;
    std::vector<unsigned char> rgb;  // 3 * height * width
};

// Throws IoError on unreadable or malformed files. Grayscale and alpha inputs
// are converted to plain RGB on read.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// [0,255] <-> [-1,1]; v/127.5 - 1 one way, clamp(round((x+1)*127.5)) back.
// The round trip is exact on all 256 byte values.
double byte_to_unit(unsigned char v);
unsigned char unit_to_byte(double x);

Tensor image_to_tensor(const Image& img);  // [3,h,w] in [-1,1]
Image tensor_to_image(const Tensor& t);    // from [3,h,w]

// f x f block mean and pixel replication over the last two dims. Wrappers
// over the graph ops, so offline data preparation and the differentiable
// training path agree bit for bit.
Tensor block_downsample(const Tensor& t, int factor);
Tensor upsample_nearest(const Tensor& t, int factor);
inline Tensor downsample_4x(const Tensor& t) { return block_downsample(t, 4); }

// Catmull-Rom bicubic (a = -0.5) 4x upsample over the last two dims. Output
// pixel o samples input coordinate (o + 0.5)/4 - 0.5; out-of-range taps are
// reflected about the edge pixel.
Tensor bicubic_upsample_4x(const Tensor& t);

struct Batch {
    Tensor inputs;  // [b,3,s,s]
    Tensor labels;  // [b,3,4s,4s]
};

// Position in the shuffled epoch sequence. The per-epoch shuffle stream is
// named by the epoch index, so these two numbers are enough to resume the
// exact batch sequence.
struct DatasetState {
    std::uint64_t epoch = 0;
    std::uint64_t pos = 0;
};

// Fixed image collection with label/input pairs precomputed at load time.
// Sources: a directory containing .png files (each gets one seeded
// crop_size x crop_size crop, block-averaged down to label_size), or a
// synthetic spec "synth:<kind>[:<count>]", kind one of ramp|checker|blobs.
class ImageDataset {
public:
    ImageDataset(const std::string& source, std::uint64_t seed, std::size_t label_size = 64,
                 std::size_t crop_size = 128);

    std::size_t size() const { return labels_.size(); }
    std::size_t label_size() const { return label_px_; }
    std::size_t input_size() const { return label_px_ / 4; }
    const Tensor& label(std::size_t i) const { return labels_[i]; }
    const Tensor& input(std::size_t i) const { return inputs_[i]; }

    // Sampling without replacement per epoch; when fewer than batch_size
    // images remain the epoch ends and a fresh shuffle begins (a remainder
    // smaller than the batch is skipped).
    Batch next_batch(std::size_t batch_size);

    DatasetState state() const { return state_; }
    void set_state(DatasetState s);

private:
    void start_epoch();

    std::uint64_t seed_ = 0;
    std::size_t label_px_ = 0;
    std::vector<Tensor> labels_, inputs_;
    std::vector<std::size_t> order_;
    DatasetState state_;
};

}  // namespace asrl
