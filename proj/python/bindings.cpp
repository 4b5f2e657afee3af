#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitpu/data.hpp"
#include "splitpu/harness.hpp"
#include "splitpu/losses.hpp"
#include "splitpu/risk.hpp"

namespace py = pybind11;
using namespace splitpu;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// [n,2] (or [2]) probability rows as a constant tensor.
ad::Tensor rows2(const Array& a, const char* name) {
    if (a.ndim() == 1 && a.shape(0) == 2) return ad::Tensor::constant({2}, {a.at(0), a.at(1)});
    if (a.ndim() != 2 || a.shape(1) != 2) throw py::value_error(std::string(name) + " must have shape [n, 2] or [2]");
    const auto n = static_cast<std::size_t>(a.shape(0));
    return ad::Tensor::constant({n, 2}, std::vector<double>(a.data(), a.data() + 2 * n));
}

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

risk::PositiveNegNorm norm_of(bool canonical) {
    return canonical ? risk::PositiveNegNorm::ByPositives : risk::PositiveNegNorm::ByUnlabeled;
}

}  // namespace

PYBIND11_MODULE(_splitpu, m) {
    m.doc() = "Positive-unlabeled learning with easy/hard splitting (C++ core)";

    py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<data::LabelLeakError>(m, "LabelLeakError", PyExc_PermissionError);

    m.def(
        "kl_divergence",
        [](const Array& p, const Array& q) {
            return ad::mean(ad::kl_divergence(rows2(p, "p"), rows2(q, "q"))).item();
        },
        py::arg("p"), py::arg("q"), "Mean row KL(p || q), natural log.");
    m.def(
        "djs_loss",
        [](const Array& p, const Array& target, double rho) {
            return losses::djs_loss(rows2(p, "p"), rows2(target, "target"), rho).item();
        },
        py::arg("p"), py::arg("target"), py::arg("rho") = 0.7);
    m.def(
        "risk_components",
        [](const Array& z_pos, const Array& z_unl, double prior, bool canonical) {
            const auto pos = flat(z_pos), unl = flat(z_unl);
            const auto r = risk::risk_components(pos, unl, prior, norm_of(canonical));
            py::dict d;
            d["pos_risk"] = r.pos_risk;
            d["unl_neg_risk"] = r.unl_neg_risk;
            d["pos_neg_risk"] = r.pos_neg_risk;
            d["correction"] = r.correction();
            d["upu"] = r.upu();
            d["nnpu"] = r.nnpu();
            d["clamp_engaged"] = r.clamp_engaged();
            return d;
        },
        py::arg("z_pos"), py::arg("z_unl"), py::arg("prior"), py::arg("canonical") = true);
    m.def(
        "nnpu_risk",
        [](const Array& z_pos, const Array& z_unl, double prior) {
            return risk::risk_components(flat(z_pos), flat(z_unl), prior, risk::PositiveNegNorm::ByPositives).nnpu();
        },
        py::arg("z_pos"), py::arg("z_unl"), py::arg("prior"));
    m.def(
        "upu_risk",
        [](const Array& z_pos, const Array& z_unl, double prior) {
            return risk::risk_components(flat(z_pos), flat(z_unl), prior, risk::PositiveNegNorm::ByPositives).upu();
        },
        py::arg("z_pos"), py::arg("z_unl"), py::arg("prior"));

    m.def("gaussian_bayes_accuracy", &data::gaussian_bayes_accuracy, py::arg("separation"), py::arg("prior") = 0.5);
    m.def(
        "synth_two_gaussians",
        [](std::size_t n_pos, std::size_t n_neg, std::size_t dim, double separation, std::uint64_t seed) {
            const auto set = data::synth_two_gaussians(n_pos, n_neg, dim, separation, seed);
            Array x({set.size(), dim});
            std::copy(set.features.begin(), set.features.end(), x.mutable_data());
            // explicit strides: the count-only constructor yields a zero stride with some numpy builds
            py::array_t<int> y({static_cast<py::ssize_t>(set.size())}, {static_cast<py::ssize_t>(sizeof(int))},
                               set.labels.data());
            return py::make_tuple(x, y);
        },
        py::arg("n_pos"), py::arg("n_neg"), py::arg("dim"), py::arg("separation"), py::arg("seed"));

    m.def(
        "normalize_config",
        [](const std::string& text) { return harness::to_json(harness::parse_spec(harness::json::parse(text))).dump(); },
        py::arg("config_json"), "Validate a JSON config string; returns the normalized JSON text.");
    m.def(
        "run_experiment",
        [](const std::string& text) {
            const auto spec = harness::parse_spec(harness::json::parse(text));
            std::vector<harness::CellResult> results;
            {
                py::gil_scoped_release release;
                results = harness::run(spec);
            }
            py::list rows;
            for (const auto& r : harness::summarize(results)) {
                rows.append(py::make_tuple(r.cell, r.mean, r.stddev, r.n));
            }
            return rows;
        },
        py::arg("config_json"), "Run every cell and seed; returns (cell, mean, std, n) rows.");
}
