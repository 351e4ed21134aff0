#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "imitate/baseline.hpp"
#include "imitate/checkpoint.hpp"
#include "imitate/config.hpp"
#include "imitate/dataset.hpp"
#include "imitate/losses.hpp"
#include "imitate/reconstruct.hpp"
#include "imitate/stats.hpp"
#include "imitate/threading.hpp"
#include "imitate/training.hpp"
#include "imitate/warp.hpp"

namespace py = pybind11;
using namespace imitate;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<int>(a.shape(i)));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
}

/// Fields are (H,W,2) both in python and internally.
Tensor field_in(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 2)
        throw std::invalid_argument("field must have shape (H, W, 2)");
    return tensor_from_array(a);
}

py::array_t<double> field_out(const Tensor& f) { return array_from_tensor(f); }

config::RunConfig config_from_json_str(const std::string& text) {
    if (text.empty()) return config::RunConfig{};
    return config::parse(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Condition-driven deformable registration core";
    init_threading();

    m.def("generate_signal",
          [](double base_period, double jitter, double drift, double duration, uint64_t seed,
             double sample_rate) {
              phantom::SignalParams p{base_period, jitter, drift, sample_rate};
              auto s = phantom::BreathingSignal::generate(p, duration, seed);
              py::array_t<double> out({static_cast<py::ssize_t>(s.samples().size()),
                                       static_cast<py::ssize_t>(2)});
              double* dst = out.mutable_data();
              for (size_t i = 0; i < s.samples().size(); ++i) {
                  dst[2 * i] = s.samples()[i].first;
                  dst[2 * i + 1] = s.samples()[i].second;
              }
              return out;
          },
          py::arg("base_period") = 4.0, py::arg("jitter") = 0.08, py::arg("drift") = 0.004,
          py::arg("duration") = 48.0, py::arg("seed") = 1, py::arg("sample_rate") = 25.0);

    m.def("render_frame",
          [](const std::string& config_json, double amplitude, double rate) {
              auto cfg = config_from_json_str(config_json);
              Tensor pixels, mask;
              phantom::render_frame(cfg.spec, amplitude, rate, &pixels, &mask);
              return py::make_tuple(array_from_tensor(pixels), array_from_tensor(mask));
          },
          py::arg("config_json") = "", py::arg("amplitude") = 0.0, py::arg("rate") = 0.0);

    m.def("make_phantom_dataset",
          [](const std::string& out_dir, const std::string& config_json, uint64_t seed) {
              auto cfg = config_from_json_str(config_json);
              cfg.seed = seed;
              double duration = cfg.plan.table_positions * cfg.plan.dwell;
              auto signal = phantom::BreathingSignal::generate(cfg.signal, duration, seed);
              auto ds = phantom::acquire(cfg.spec, cfg.plan, signal, seed);
              phantom::save_dataset(ds, out_dir);
              return out_dir;
          },
          py::arg("out_dir"), py::arg("config_json") = "", py::arg("seed") = 1,
          py::call_guard<py::gil_scoped_release>());

    m.def("warp_image",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& img,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
              return array_from_tensor(warp::warp_image(tensor_from_array(img), field_in(field)));
          },
          py::arg("image"), py::arg("field"));

    m.def("warp_mask",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mask,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& field,
             int n_labels) {
              return array_from_tensor(
                  warp::warp_mask(tensor_from_array(mask), field_in(field), n_labels));
          },
          py::arg("mask"), py::arg("field"), py::arg("n_labels") = phantom::kNumLabels);

    m.def("scale_field",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field,
             double s) { return field_out(warp::scale_field(field_in(field), s)); },
          py::arg("field"), py::arg("s"));

    m.def("jacobian_determinant",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
              return array_from_tensor(warp::jacobian_determinant(field_in(field)));
          },
          py::arg("field"));

    m.def("ncc_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& fixed,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& warped,
             int window) {
              return losses::ncc_value(tensor_from_array(fixed), tensor_from_array(warped),
                                       window);
          },
          py::arg("fixed"), py::arg("warped"), py::arg("window") = 9);

    m.def("dice_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& fixed_onehot,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& warped_onehot) {
              return losses::dice_value(tensor_from_array(fixed_onehot),
                                        tensor_from_array(warped_onehot));
          },
          py::arg("fixed_onehot"), py::arg("warped_onehot"));

    m.def("detjac_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
              return losses::detjac_value(field_in(field));
          },
          py::arg("field"));

    m.def("agreement_loss",
          [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
                 warped) {
              std::vector<Tensor> ts;
              for (const auto& w : warped) ts.push_back(tensor_from_array(w));
              return losses::agreement_value(ts);
          },
          py::arg("warped"));

    m.def("combined_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& fixed,
             const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
                 warped,
             const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
                 fields,
             double alpha, double beta, double gamma, double zeta, int window) {
              std::vector<ad::Var> ws, fs, ms;
              for (const auto& w : warped) ws.push_back(ad::constant(tensor_from_array(w)));
              for (const auto& f : fields) fs.push_back(ad::constant(field_in(f)));
              losses::LossWeights lw{alpha, beta, gamma, zeta};
              auto terms = losses::combined_loss(ad::constant(tensor_from_array(fixed)), nullptr,
                                                 ws, ms, fs, lw, window);
              auto r = terms.report();
              py::dict d;
              d["total"] = r.total;
              d["sim"] = r.sim;
              d["struct"] = r.structural;
              d["reg"] = r.reg;
              d["agreement"] = r.agreement;
              return d;
          },
          py::arg("fixed"), py::arg("warped"), py::arg("fields"), py::arg("alpha") = 0.7,
          py::arg("beta") = 0.3, py::arg("gamma") = 0.3 * 0.7 * 0.3, py::arg("zeta") = 0.7,
          py::arg("window") = 9);

    m.def("wilcoxon",
          [](const std::vector<double>& a, const std::vector<double>& b) {
              auto r = stats::wilcoxon_signed_rank(a, b);
              py::dict d;
              d["p_value"] = r.p_value;
              d["w_plus"] = r.w_plus;
              d["n_used"] = r.n_used;
              d["exact"] = r.exact;
              return d;
          },
          py::arg("a"), py::arg("b"));

    m.def("train",
          [](const std::string& data_dir, const std::string& config_json,
             const std::string& out_dir) {
              auto cfg = config_from_json_str(config_json);
              auto ds = phantom::load_dataset(data_dir);
              auto r = train::fit(ds, cfg.model, cfg.train, out_dir);
              py::dict d;
              d["checkpoint"] = r.checkpoint_path;
              d["best_val_ncc"] = r.best_val_ncc;
              d["reference_val_ncc"] = r.reference_val_ncc;
              d["flagged"] = r.flagged;
              d["total_steps"] = r.total_steps;
              return d;
          },
          py::arg("data_dir"), py::arg("config_json") = "", py::arg("out_dir") = "run",
          py::call_guard<py::gil_scoped_release>());

    m.def("model_forward",
          [](const std::string& checkpoint,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& stack,
             const std::vector<double>& deltas) {
              auto net = unet::load_checkpoint(checkpoint);
              auto fields = net.forward(tensor_from_array(stack), deltas);
              py::list out;
              for (const auto& f : fields) out.append(field_out(f));
              return out;
          },
          py::arg("checkpoint"), py::arg("input_stack"), py::arg("deltas"));

    m.def("recover_frame",
          [](const std::string& data_dir, const std::string& checkpoint, double target,
             int position, int n_context) {
              auto ds = phantom::load_dataset(data_dir);
              auto net = unet::load_checkpoint(checkpoint);
              recon::ReconstructionRequest req{target, position, n_context};
              auto f = recon::recover_frame(req, ds, net);
              return py::make_tuple(array_from_tensor(f.image), field_out(f.field),
                                    f.chosen_index);
          },
          py::arg("data_dir"), py::arg("checkpoint"), py::arg("target"), py::arg("position") = 0,
          py::arg("n_context") = 3);

    m.def("default_config_json", []() {
        return config::to_json(config::RunConfig{}).dump(2);
    });

    m.attr("__version__") = "0.1.0";
}
