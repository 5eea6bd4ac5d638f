#pragma once

#include <array>
#include <string>
#include <vector>

#include "asrl/record.hpp"
#include "asrl/tensor.hpp"

namespace asrl {

// Mean over batch and pixels of |downsample_4x(generated) - z|; zero exactly
// when the downscaled output reproduces the input.
double l1_metric(const Tensor& generated, const Tensor& z);

// 10*log10(max_val^2 / MSE). Identical tensors report +infinity.
double psnr(const Tensor& a, const Tensor& b, double max_val = 2.0);

// Exact Wasserstein-1 between equal-weight empirical distributions on the
// line. Equal counts use the mean sorted difference; unequal counts integrate
// the quantile difference exactly in O(m*n).
double w1_exact_1d(std::vector<double> a, std::vector<double> b);

// Fraction of images whose nearest neighbour in the batch, by mean absolute
// pixel distance, is closer than tau. images is [b,...], b >= 2.
double duplicate_rate(const Tensor& images, double tau);

// out[i] = mean(series[max(0, i-window+1) .. i]); a growing prefix window
// until i reaches window-1.
std::vector<double> moving_average(const std::vector<double>& series, std::size_t window = 100);

// Mosaic PNG: rows[r][c] are [3,h,w] tiles of one common size, blitted with
// no gaps. Callers order rows input / bicubic / label / output.
void emit_grid(const std::vector<std::vector<Tensor>>& rows, const std::string& path);

// Three-panel SVG (l1_metric, j_d, j_g against g_iter), each series smoothed
// with the window-100 prefix mean. Exactly one <path> per panel.
void emit_curves(const std::vector<TrainRecord>& records, const std::string& path);

// One-panel SVG of the shifted-Gaussian comparison: exact W1 and the critic
// estimate against the shift, one polyline each. rows are (shift, exact,
// estimate) sorted by shift.
void emit_w1_plot(const std::vector<std::array<double, 3>>& rows, const std::string& path);

struct EvalReport {
    double l1 = 0.0;
    double psnr_db = 0.0;
    double duplicate_rate = 0.0;
    double bicubic_l1 = 0.0;
    double bicubic_psnr_db = 0.0;
    // Rows of (shift, exact W1, critic estimate); empty means not measured.
    std::vector<std::array<double, 3>> w1_table;
};

// JSON text with fixed keys l1 / psnr_db / duplicate_rate, the bicubic
// baselines, and w1_table when present. Infinite PSNR serializes as "inf".
std::string report_json(const EvalReport& r);

}  // namespace asrl
