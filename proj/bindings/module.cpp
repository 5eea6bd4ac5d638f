#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "asrl/cli.hpp"
#include "asrl/config.hpp"
#include "asrl/datapipe.hpp"
#include "asrl/errors.hpp"
#include "asrl/evalkit.hpp"
#include "asrl/toyw1.hpp"
#include "asrl/trainer.hpp"

namespace py = pybind11;
using namespace asrl;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& arr) {
    std::vector<std::size_t> shape(static_cast<std::size_t>(arr.ndim()));
    for (std::size_t i = 0; i < shape.size(); ++i)
        shape[i] = static_cast<std::size_t>(arr.shape(static_cast<py::ssize_t>(i)));
    Tensor t(shape);
    std::copy_n(arr.data(), t.size(), t.data());
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) shape[i] = static_cast<py::ssize_t>(t.dim(i));
    py::array_t<double> arr(shape);
    std::copy_n(t.data(), t.size(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(asrl, m) {
    m.doc() = "Adversarial training laboratory: GAN/WGAN/WGAN-GP objectives for 4x "
              "single-image super-resolution";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ShapeError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const NumericsError& e) {
            PyErr_SetString(PyExc_ArithmeticError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        }
    });

    m.def("run_cli", &run_cli, py::arg("args"),
          "Run one command (same words as the asrl binary after the program name); returns "
          "the exit code.");

    m.def(
        "resolve_config",
        [](const std::string& text) { return resolved_config_json(parse_run_config(text)); },
        py::arg("json_text"),
        "Validate a run configuration and return the fully resolved echo. Raises ValueError "
        "naming the offending field.");

    m.def("checkpoint_config", &checkpoint_config_json, py::arg("path"),
          "The resolved configuration text embedded in a checkpoint file.");

    m.def(
        "w1_exact_1d",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return w1_exact_1d(a, b);
        },
        py::arg("a"), py::arg("b"),
        "Exact Wasserstein-1 distance between two 1-D samples.");

    m.def(
        "psnr",
        [](const DoubleArray& a, const DoubleArray& b, double max_val) {
            return psnr(to_tensor(a), to_tensor(b), max_val);
        },
        py::arg("a"), py::arg("b"), py::arg("max_val") = 2.0,
        "Peak signal-to-noise ratio in dB; +inf for identical inputs.");

    m.def(
        "l1_metric",
        [](const DoubleArray& generated, const DoubleArray& z) {
            return l1_metric(to_tensor(generated), to_tensor(z));
        },
        py::arg("generated"), py::arg("z"),
        "Mean absolute difference between the 4x-downsampled output and its low-res "
        "reference.");

    m.def(
        "duplicate_rate",
        [](const DoubleArray& images, double tau) {
            return duplicate_rate(to_tensor(images), tau);
        },
        py::arg("images"), py::arg("tau"),
        "Fraction of batch images whose nearest neighbour is closer than tau.");

    m.def(
        "moving_average",
        [](const std::vector<double>& series, std::size_t window) {
            return moving_average(series, window);
        },
        py::arg("series"), py::arg("window") = 100,
        "Prefix-windowed mean used for the training curves.");

    m.def(
        "bicubic_upsample_4x",
        [](const DoubleArray& t) { return to_array(bicubic_upsample_4x(to_tensor(t))); },
        py::arg("image"),
        "Catmull-Rom 4x upsample over the last two dimensions.");

    m.def(
        "block_downsample",
        [](const DoubleArray& t, int factor) {
            return to_array(block_downsample(to_tensor(t), factor));
        },
        py::arg("image"), py::arg("factor"),
        "factor x factor block mean over the last two dimensions.");

    m.def(
        "upsample_nearest",
        [](const DoubleArray& t, int factor) {
            return to_array(upsample_nearest(to_tensor(t), factor));
        },
        py::arg("image"), py::arg("factor"),
        "Pixel replication over the last two dimensions.");

    m.def(
        "toy_w1",
        [](std::uint64_t seed, const std::vector<double>& shifts, int critic_steps,
           std::size_t batch, std::size_t hidden, std::size_t oracle_samples) {
            py::list out;
            for (const ToyW1Row& r :
                 toy_w1_experiment(seed, shifts, critic_steps, batch, hidden, oracle_samples)) {
                py::dict d;
                d["shift"] = r.shift;
                d["w1_exact"] = r.w1_exact;
                d["neg_j_d"] = r.neg_j_d;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 0, py::arg("shifts") = std::vector<double>{0.0, 0.5, 1.0, 2.0},
        py::arg("critic_steps") = 2000, py::arg("batch") = 64, py::arg("hidden") = 64,
        py::arg("oracle_samples") = 10000,
        "Shifted-Gaussian critic experiment; rows pair the exact distance with the critic "
        "estimate.");
}
