#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "msvar/bias_field.hpp"
#include "msvar/level_set.hpp"
#include "msvar/metrics.hpp"
#include "msvar/soft_seg.hpp"
#include "msvar/supervision.hpp"

namespace py = pybind11;
using namespace msvar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C)
Image to_image(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw InputError("image must be 2-D or 3-D");
    const auto h = static_cast<std::size_t>(a.shape(0));
    const auto w = static_cast<std::size_t>(a.shape(1));
    const std::size_t c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
    return Image(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_image(const Image& x) {
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(x.height()), static_cast<py::ssize_t>(x.width())};
    if (x.channels() > 1) shape.push_back(static_cast<py::ssize_t>(x.channels()));
    Array out(shape);
    std::copy(x.values().begin(), x.values().end(), out.mutable_data());
    return out;
}

Array from_field(const ScalarField& f) {
    Array out({f.height(), f.width()});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

// (N, H, W)
Array from_fields(const std::vector<ScalarField>& fields) {
    Array out({fields.size(), fields.front().height(), fields.front().width()});
    double* dst = out.mutable_data();
    for (const auto& f : fields) dst = std::copy(f.values().begin(), f.values().end(), dst);
    return out;
}

std::vector<ScalarField> to_fields(const Array& a) {
    if (a.ndim() != 3) throw InputError("expected an (N, H, W) array");
    const auto n = static_cast<std::size_t>(a.shape(0));
    const auto h = static_cast<std::size_t>(a.shape(1));
    const auto w = static_cast<std::size_t>(a.shape(2));
    std::vector<ScalarField> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = a.data() + i * h * w;
        out.emplace_back(h, w, std::vector<double>(src, src + h * w));
    }
    return out;
}

LabelMap to_labels(const LabelArray& a) {
    if (a.ndim() != 2) throw InputError("label map must be 2-D");
    return LabelMap(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                    std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

LabelArray from_labels(const LabelMap& l) {
    LabelArray out({l.height(), l.width()});
    std::copy(l.labels().begin(), l.labels().end(), out.mutable_data());
    return out;
}

Array from_centroids(const Centroids& c) {
    Array out({c.num_classes(), c.channels()});
    std::copy(c.values().begin(), c.values().end(), out.mutable_data());
    return out;
}

py::list from_trace(const std::vector<TraceRow>& trace) {
    py::list rows;
    for (const auto& r : trace) {
        py::dict d;
        d["iter"] = r.iter;
        d["loss"] = r.loss;
        d["data_term"] = r.data_term;
        d["tv_term"] = r.tv_term;
        d["bias_tv_term"] = r.bias_tv_term;
        rows.append(d);
    }
    return rows;
}

MsConfig make_config(double lambda, std::size_t num_classes, double step_size, std::size_t max_iters,
                     double rel_tol, std::uint64_t seed, const std::string& mode) {
    MsConfig cfg;
    cfg.lambda = lambda;
    cfg.num_classes = num_classes;
    cfg.step_size = step_size;
    cfg.max_iters = max_iters;
    cfg.rel_tol = rel_tol;
    cfg.seed = seed;
    cfg.mode = parse_gradient_mode(mode);
    cfg.validate();
    return cfg;
}

py::dict ms_result_dict(const MsResult& r) {
    py::dict d;
    d["mask"] = from_labels(hard_mask(r.segmentation));
    d["memberships"] = from_fields(r.segmentation.memberships());
    d["centroids"] = from_centroids(r.centroids);
    d["trace"] = from_trace(r.trace);
    d["converged"] = r.converged;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Relaxed Mumford-Shah segmentation";

    // translators run newest first, so the most derived types come last
    py::register_exception<Error>(m, "Error", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    m.def(
        "make_phantom",
        [](const std::string& kind, std::size_t size, double sigma, std::uint64_t seed) {
            const Phantom ph = make_phantom(parse_phantom_kind(kind), size, sigma, seed);
            py::object bias = py::none();
            if (ph.bias) bias = from_field(*ph.bias);
            return py::make_tuple(from_image(ph.image), from_labels(ph.labels), bias);
        },
        py::arg("kind"), py::arg("size") = 64, py::arg("sigma") = 0.05, py::arg("seed") = 0,
        "Returns (image, labels, true_bias or None).");

    m.def(
        "softmax", [](const Array& logits) { return from_fields(softmax(to_fields(logits))); }, py::arg("logits"));

    m.def(
        "ms_loss",
        [](const Array& image, const Array& logits, double lambda, double tv_eps) {
            MsConfig cfg;
            cfg.lambda = lambda;
            cfg.tv_eps = tv_eps;
            const auto l = ms_loss(to_image(image), SoftSegmentation(to_fields(logits)), cfg);
            return py::make_tuple(l.loss, l.data_term, l.tv_term);
        },
        py::arg("image"), py::arg("logits"), py::arg("lambda_") = 1e-3, py::arg("tv_eps") = 1e-8,
        "Returns (loss, data_term, tv_term).");

    m.def(
        "minimize_ms",
        [](const Array& image, std::size_t num_classes, double lambda, double step_size, std::size_t max_iters,
           double rel_tol, std::uint64_t seed, const std::string& init, const std::string& mode) {
            const MsConfig cfg = make_config(lambda, num_classes, step_size, max_iters, rel_tol, seed, mode);
            const Image x = to_image(image);
            const MsResult r = [&] {
                py::gil_scoped_release release;
                return minimize_ms(x, cfg, parse_init_kind(init));
            }();
            return ms_result_dict(r);
        },
        py::arg("image"), py::arg("num_classes") = 2, py::arg("lambda_") = 1e-3, py::arg("step_size") = 0.5,
        py::arg("max_iters") = 500, py::arg("rel_tol") = 1e-6, py::arg("seed") = 0, py::arg("init") = "random",
        py::arg("mode") = "frozen");

    m.def(
        "minimize_ms_bias",
        [](const Array& image, double gamma, std::size_t num_classes, double lambda, double step_size,
           std::size_t max_iters, double rel_tol, std::uint64_t seed, const std::string& init) {
            const MsConfig cfg = make_config(lambda, num_classes, step_size, max_iters, rel_tol, seed, "frozen");
            const Image x = to_image(image);
            BiasConfig bc;
            bc.gamma = gamma;
            const MsBiasResult r = [&] {
                py::gil_scoped_release release;
                return minimize_ms_bias(x, cfg, bc, parse_init_kind(init));
            }();
            py::dict d;
            d["mask"] = from_labels(hard_mask(r.segmentation));
            d["bias"] = from_field(r.bias.b);
            d["centroids"] = from_centroids(r.centroids);
            d["trace"] = from_trace(r.trace);
            d["converged"] = r.converged;
            return d;
        },
        py::arg("image"), py::arg("gamma") = 0.1, py::arg("num_classes") = 2, py::arg("lambda_") = 1e-3,
        py::arg("step_size") = 0.5, py::arg("max_iters") = 500, py::arg("rel_tol") = 1e-6, py::arg("seed") = 0,
        py::arg("init") = "random");

    m.def(
        "segment_levelset",
        [](const Array& image, std::size_t phases, double lambda, double dt, std::size_t max_iters, double rel_tol,
           std::uint64_t seed) {
            LevelSetParams p;
            p.phases = phases;
            p.lambda = lambda;
            p.dt = dt;
            p.max_iters = max_iters;
            p.rel_tol = rel_tol;
            p.seed = seed;
            const Image x = to_image(image);
            LevelSetResult r = segment_levelset(x, p);
            py::dict d;
            d["mask"] = from_labels(r.labels);
            d["means"] = from_centroids(r.means);
            d["trace"] = from_trace(r.trace);
            d["converged"] = r.converged;
            return d;
        },
        py::arg("image"), py::arg("phases") = 1, py::arg("lambda_") = 1e-2, py::arg("dt") = 0.5,
        py::arg("max_iters") = 3000, py::arg("rel_tol") = 1e-6, py::arg("seed") = 0);

    m.def(
        "cross_entropy",
        [](const Array& logits, const LabelArray& labels) {
            return cross_entropy(SoftSegmentation(to_fields(logits)), to_labels(labels));
        },
        py::arg("logits"), py::arg("labels"));

    m.def(
        "combined_loss",
        [](const Array& image, const Array& logits, std::optional<LabelArray> labels, double beta, double lambda) {
            MsConfig cfg;
            cfg.lambda = lambda;
            std::optional<LabelMap> g;
            if (labels) g = to_labels(*labels);
            const CombinedLossConfig cc{beta, g.has_value()};
            const auto l = combined_loss(to_image(image), SoftSegmentation(to_fields(logits)), g, cc, cfg);
            return py::make_tuple(l.total, l.ce, l.ms);
        },
        py::arg("image"), py::arg("logits"), py::arg("labels") = py::none(), py::arg("beta") = 1e-7,
        py::arg("lambda_") = 1e-3, "Returns (total, ce, ms); the CE term is active when labels are given.");

    m.def(
        "overlap_metrics",
        [](const LabelArray& pred, const LabelArray& gt, std::size_t positive_class) {
            const auto o = overlap_metrics(to_labels(pred), to_labels(gt), positive_class);
            py::dict d;
            d["iou"] = o.iou;
            d["dice"] = o.dice;
            d["precision"] = o.precision;
            d["recall"] = o.recall;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("positive_class") = 1);

    m.def(
        "clustering_metrics",
        [](const LabelArray& pred, const LabelArray& gt) {
            const auto c = clustering_metrics(to_labels(pred), to_labels(gt));
            py::dict d;
            d["rc"] = c.rc;
            d["pri"] = c.pri;
            d["vi"] = c.vi;
            return d;
        },
        py::arg("pred"), py::arg("gt"));
}
