#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtda/checkpoint.hpp"
#include "mtda/eval.hpp"
#include "mtda/trainer.hpp"

namespace py = pybind11;
using namespace mtda;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
    Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
    std::vector<double> vals(a.data(), a.data() + a.size());
    return Tensor::from_values(std::move(shape), std::move(vals));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

// Owns a dataset collection on the python side.
struct Datasets {
    std::vector<DomainDataset> items;
};

Datasets make_synthetic(std::size_t domains, std::size_t classes, std::size_t n_per_domain,
                        double rotation_deg, double noise_sigma, std::uint64_t seed,
                        const std::vector<std::array<double, 2>>& base_means) {
    SyntheticSpec spec;
    spec.domains = domains;
    spec.classes = classes;
    spec.n_per_domain = n_per_domain;
    spec.rotation_per_domain_deg = rotation_deg;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;
    spec.base_means = base_means;
    return Datasets{gen_synthetic_domains(spec)};
}

Datasets load_idx_datasets(const std::vector<std::pair<std::string, std::string>>& paths,
                           std::size_t downsample) {
    Datasets out;
    for (std::size_t d = 0; d < paths.size(); ++d) {
        out.items.push_back(
            load_idx_files(paths[d].first, paths[d].second, static_cast<int>(d), d == 0, downsample));
    }
    return out;
}

TrainConfig build_config(const Datasets& data, const std::string& mode, std::size_t steps,
                         std::size_t batch_per_domain, std::uint64_t seed, std::size_t feature_dim,
                         std::size_t encoder_hidden, std::size_t decoder_hidden,
                         const std::vector<std::size_t>& domain_hidden, std::size_t label_hidden,
                         double lambda_r, double lambda_c, double lambda_d, double eta,
                         const std::string& optimizer, const std::string& adversarial) {
    if (data.items.empty()) throw ConfigError("no datasets");
    std::size_t classes = 0;
    for (const auto& d : data.items)
        if (d.has_labels())
            for (int v : d.evaluation_labels()) classes = std::max(classes, std::size_t(v) + 1);

    TrainConfig c;
    c.mode = mode_from_tag(mode);
    c.steps = steps;
    c.batch_per_domain = batch_per_domain;
    c.seed = seed;
    c.eval_every = 0;
    c.num_classes = classes;
    c.hp.lambda_r = lambda_r;
    c.hp.lambda_c = lambda_c;
    c.hp.lambda_d = lambda_d;
    c.hp.eta = eta;
    if (optimizer == "adam") {
        c.optimizer = OptimizerKind::adam;
    } else if (optimizer == "sgd") {
        c.optimizer = OptimizerKind::sgd;
    } else {
        throw ConfigError("optimizer must be 'adam' or 'sgd'");
    }
    if (adversarial == "confusion") {
        c.adversarial = AdversarialForm::confusion;
    } else if (adversarial == "sign_flip") {
        c.adversarial = AdversarialForm::sign_flip;
    } else {
        throw ConfigError("adversarial must be 'confusion' or 'sign_flip'");
    }

    const std::size_t d_x = data.items.front().inputs().cols();
    NetConfigSet s;
    s.shared_encoder = {{d_x, encoder_hidden, feature_dim}, OutputActivation::linear};
    s.private_encoder = {{d_x, encoder_hidden, feature_dim}, OutputActivation::linear};
    s.decoder = {{2 * feature_dim, decoder_hidden, d_x}, OutputActivation::tanh_squash};
    std::vector<std::size_t> dom = {feature_dim};
    dom.insert(dom.end(), domain_hidden.begin(), domain_hidden.end());
    dom.push_back(data.items.size());
    s.domain_classifier = {dom, OutputActivation::softmax};
    s.label_classifier = {{feature_dim, label_hidden, classes}, OutputActivation::softmax};
    c.nets = s;
    return c;
}

struct TrainedModel {
    ModelParams params;
    RunReport report;
};

py::dict report_dict(const RunReport& r) {
    py::dict out;
    out["mode"] = r.mode;
    out["seed"] = r.seed;
    out["mean_target_accuracy"] = r.mean_target_accuracy;
    py::dict acc;
    for (const auto& [dom, a] : r.per_domain_accuracy) acc[py::int_(dom)] = a;
    out["per_domain_accuracy"] = acc;
    if (r.shared_probe_accuracy >= 0.0) {
        out["shared_probe_accuracy"] = r.shared_probe_accuracy;
        out["private_probe_accuracy"] = r.private_probe_accuracy;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "multi-target domain adaptation with shared/private feature factorization";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Datasets>(m, "Datasets")
        .def("__len__", [](const Datasets& d) { return d.items.size(); })
        .def("inputs",
             [](const Datasets& d, std::size_t i) { return array_from_tensor(d.items.at(i).inputs()); })
        .def("labels",
             [](const Datasets& d, std::size_t i) {
                 auto span = d.items.at(i).evaluation_labels();
                 return std::vector<int>(span.begin(), span.end());
             })
        .def("domain_id", [](const Datasets& d, std::size_t i) { return d.items.at(i).domain_id(); });

    m.def("synthetic_datasets", &make_synthetic, py::arg("domains") = 3, py::arg("classes") = 3,
          py::arg("n_per_domain") = 600, py::arg("rotation_deg") = 25.0,
          py::arg("noise_sigma") = 0.055, py::arg("seed") = 0,
          py::arg("base_means") = std::vector<std::array<double, 2>>{});

    m.def("load_idx_datasets", &load_idx_datasets, py::arg("paths"), py::arg("downsample") = 0,
          "paths: list of (images, labels) file pairs; the first pair is the source domain");

    py::class_<TrainedModel>(m, "TrainedModel")
        .def("report", [](const TrainedModel& t) { return report_dict(t.report); })
        .def("evaluate",
             [](const TrainedModel& t, const Datasets& data, std::size_t index) {
                 return eval_accuracy(t.params, data.items.at(index));
             })
        .def(
            "probe",
            [](const TrainedModel& t, const Datasets& data, std::uint64_t seed) {
                auto p = probe_disentanglement(t.params, data.items, seed);
                return py::make_tuple(p.shared_accuracy, p.private_accuracy);
            },
            py::arg("datasets"), py::arg("seed") = 0)
        .def("export_features",
             [](const TrainedModel& t, const Datasets& data, const std::string& path) {
                 export_features(t.params, data.items, path);
             })
        .def("encode_shared",
             [](const TrainedModel& t, const py::array_t<double>& x) {
                 return array_from_tensor(encode_shared(t.params, tensor_from_array(x)));
             })
        .def("encode_private", [](const TrainedModel& t, const py::array_t<double>& x) {
            return array_from_tensor(encode_private(t.params, tensor_from_array(x)));
        });

    m.def(
        "train",
        [](const Datasets& data, const std::string& mode, std::size_t steps,
           std::size_t batch_per_domain, std::uint64_t seed, std::size_t feature_dim,
           std::size_t encoder_hidden, std::size_t decoder_hidden,
           const std::vector<std::size_t>& domain_hidden, std::size_t label_hidden, double lambda_r,
           double lambda_c, double lambda_d, double eta, const std::string& optimizer,
           const std::string& adversarial) {
            TrainConfig c = build_config(data, mode, steps, batch_per_domain, seed, feature_dim,
                                         encoder_hidden, decoder_hidden, domain_hidden, label_hidden,
                                         lambda_r, lambda_c, lambda_d, eta, optimizer, adversarial);
            auto [state, report] = train_loop(data.items, c);
            return TrainedModel{std::move(state.params), std::move(report)};
        },
        py::arg("datasets"), py::arg("mode") = "full", py::arg("steps") = 3000,
        py::arg("batch_per_domain") = 16, py::arg("seed") = 0, py::arg("feature_dim") = 2,
        py::arg("encoder_hidden") = 128, py::arg("decoder_hidden") = 64,
        py::arg("domain_hidden") = std::vector<std::size_t>{96, 96, 96},
        py::arg("label_hidden") = 64, py::arg("lambda_r") = 1.0, py::arg("lambda_c") = 0.01,
        py::arg("lambda_d") = 0.20, py::arg("eta") = 2e-4, py::arg("optimizer") = "adam",
        py::arg("adversarial") = "confusion");

    m.def(
        "source_only_baseline",
        [](const Datasets& data, std::size_t steps, std::size_t batch_per_domain, std::uint64_t seed,
           std::size_t feature_dim, std::size_t encoder_hidden) {
            TrainConfig c =
                build_config(data, "source_only", steps, batch_per_domain, seed, feature_dim,
                             encoder_hidden, 64, {96, 96, 96}, 64, 1.0, 0.01, 0.2, 2e-4, "adam",
                             "confusion");
            auto [state, report] = train_loop(data.items, c);
            return report_dict(report);
        },
        py::arg("datasets"), py::arg("steps") = 3000, py::arg("batch_per_domain") = 16,
        py::arg("seed") = 0, py::arg("feature_dim") = 2, py::arg("encoder_hidden") = 128);

    m.def("nearest_neighbor_baseline",
          [](const Datasets& data) { return report_dict(baseline_1nn(data.items)); });

    m.def("entropy_term",
          [](const py::array_t<double>& p) { return entropy_term(tensor_from_array(p)); });
    m.def("balance_term",
          [](const py::array_t<double>& p) { return balance_term(tensor_from_array(p)); });
    m.def("mi_lower_bound_gap", [](const py::array_t<double>& joint, const py::array_t<double>& q) {
        auto r = mi_lower_bound_gap(tensor_from_array(joint), tensor_from_array(q));
        return py::make_tuple(r.exact_mi, r.bound_value);
    });
}
