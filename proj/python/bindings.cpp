// Thin numpy-facing wrapper over the C++ core. Complex matrices cross as
// 2-D complex128 arrays, network tensors as float32 arrays; everything is
// copied at the boundary, so python never aliases C++ buffers.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "covnet/channel.hpp"
#include "covnet/covariance.hpp"
#include "covnet/model.hpp"
#include "covnet/optimizer.hpp"
#include "covnet/transforms.hpp"

namespace py = pybind11;
using namespace covnet;

namespace {

using carray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using farray = py::array_t<float, py::array::c_style | py::array::forcecast>;

CMat cmat_in(const carray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D complex array");
    CMat m(a.shape(0), a.shape(1));
    std::memcpy(m.a.data(), a.data(), sizeof(cx) * m.a.size());
    return m;
}

py::array_t<std::complex<double>> cmat_out(const CMat& m) {
    py::array_t<std::complex<double>> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.a.data(), sizeof(cx) * m.a.size());
    return out;
}

std::vector<CMat> cmat_list_in(const std::vector<carray>& v) {
    std::vector<CMat> out;
    out.reserve(v.size());
    for (const auto& a : v) out.push_back(cmat_in(a));
    return out;
}

py::list cmat_list_out(const std::vector<CMat>& v) {
    py::list out;
    for (const auto& m : v) out.append(cmat_out(m));
    return out;
}

Tensor<float> tensor_in(const farray& a) {
    Shape s(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) s[static_cast<std::size_t>(i)] = a.shape(i);
    return Tensor<float>::from_data(std::move(s), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> tensor_out(const Tensor<float>& t) {
    std::vector<py::ssize_t> s(t.shape().begin(), t.shape().end());
    py::array_t<float> out(s);
    std::memcpy(out.mutable_data(), t.data().data(), sizeof(float) * t.data().size());
    return out;
}

}  // namespace

PYBIND11_MODULE(_covnet, m) {
    m.doc() = "covariance-assisted CSI feedback core";

    // ---- transforms ----
    m.def("to_angle_delay", [](const carray& h) { return cmat_out(to_angle_delay(cmat_in(h))); }, py::arg("h"));
    m.def("to_angle_delay_truncated",
          [](const carray& h, std::int64_t n_a) { return cmat_out(to_angle_delay_truncated(cmat_in(h), n_a)); },
          py::arg("h"), py::arg("n_a"));
    m.def("from_angle_delay",
          [](const carray& h, std::int64_t n_c) { return cmat_out(from_angle_delay(cmat_in(h), n_c)); },
          py::arg("h"), py::arg("n_c"));
    m.def("nmse_linear",
          [](const carray& h_true, const carray& h_hat) { return nmse_linear(cmat_in(h_true), cmat_in(h_hat)); },
          py::arg("h_true"), py::arg("h_hat"));
    m.def("nmse_db", &nmse_db, py::arg("linear"));
    m.def("cr_to_codeword_len", &cr_to_codeword_len, py::arg("n_a"), py::arg("n_t"), py::arg("cr"));
    m.def("codeword_len_to_cr", &codeword_len_to_cr, py::arg("n_a"), py::arg("n_t"), py::arg("m"));
    m.def("stack_real", [](const carray& h) {
        auto v = stack_real<float>(cmat_in(h));
        py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
        std::memcpy(out.mutable_data(), v.data(), sizeof(float) * v.size());
        return out;
    }, py::arg("h"));

    // ---- channel simulator ----
    py::class_<ChannelConfig>(m, "ChannelConfig")
        .def(py::init<>())
        .def_readwrite("n_tx", &ChannelConfig::n_tx)
        .def_readwrite("n_sub", &ChannelConfig::n_sub)
        .def_readwrite("n_delay", &ChannelConfig::n_delay)
        .def_readwrite("n_paths", &ChannelConfig::n_paths)
        .def_readwrite("angle_spread_deg", &ChannelConfig::angle_spread_deg)
        .def_readwrite("delay_max", &ChannelConfig::delay_max)
        .def_readwrite("delay_offset", &ChannelConfig::delay_offset)
        .def_readwrite("snapshots_per_geometry", &ChannelConfig::snapshots_per_geometry)
        .def_readwrite("seed", &ChannelConfig::seed)
        .def_readwrite("uplink_downlink_freq_ratio", &ChannelConfig::uplink_downlink_freq_ratio)
        .def_readwrite("delay_decay", &ChannelConfig::delay_decay)
        .def("validate", &ChannelConfig::validate);

    m.def("generate_sample", [](const ChannelConfig& cfg, std::uint64_t index) {
        auto s = generate_sample(cfg, index);
        py::dict out;
        out["h_truncated"] = cmat_out(s.h_truncated);
        out["covariance"] = cmat_list_out(s.covariance);
        return out;
    }, py::arg("config"), py::arg("index"));
    m.def("truncation_energy_fraction", &truncation_energy_fraction, py::arg("config"), py::arg("n_geometries"));

    // ---- covariance ----
    m.def("estimate_covariance",
          [](const std::vector<carray>& snaps) { return cmat_list_out(estimate_covariance(cmat_list_in(snaps))); },
          py::arg("snapshots"));
    m.def("top_eigenvector", [](const carray& c) {
        auto eig = top_eigenvector(cmat_in(c));
        py::array_t<std::complex<double>> vec(static_cast<py::ssize_t>(eig.vector.size()));
        std::memcpy(vec.mutable_data(), eig.vector.data(), sizeof(cx) * eig.vector.size());
        return py::make_tuple(eig.value, vec);
    }, py::arg("c"));
    m.def("min_eigenvalue", [](const carray& c) { return min_eigenvalue(cmat_in(c)); }, py::arg("c"));

    py::class_<CovPre>(m, "CovPre")
        .def_property_readonly("q_bar", [](const CovPre& p) { return cmat_out(p.q_bar); })
        .def_property_readonly("c_bar_1", [](const CovPre& p) { return cmat_out(p.c_bar_1); })
        .def_property_readonly("c_bar_2", [](const CovPre& p) { return cmat_out(p.c_bar_2); })
        .def_readonly("i_m1", &CovPre::i_m1)
        .def_readonly("i_m2", &CovPre::i_m2)
        .def_readonly("row_powers", &CovPre::row_powers)
        .def("stacked_q_bar", [](const CovPre& p) {
            auto v = stack_real<float>(p.q_bar);
            py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
            std::memcpy(out.mutable_data(), v.data(), sizeof(float) * v.size());
            return out;
        })
        .def("stacked_c_bar", [](const CovPre& p) {
            auto v = stack_cbar<float>(p);
            py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
            std::memcpy(out.mutable_data(), v.data(), sizeof(float) * v.size());
            return out;
        });

    m.def("preprocess", [](const std::vector<carray>& cov, bool conjugate_q_rows) {
        PreprocessOptions opt;
        opt.conjugate_q_rows = conjugate_q_rows;
        return preprocess(cmat_list_in(cov), opt);
    }, py::arg("covariance"), py::arg("conjugate_q_rows") = true);

    m.def("inject_noise", [](const std::vector<carray>& cov, double snr_db, std::uint64_t seed) {
        Rng rng(seed);
        return cmat_list_out(inject_noise(cmat_list_in(cov), snr_db, rng));
    }, py::arg("covariance"), py::arg("snr_db"), py::arg("seed"));

    // ---- model ----
    py::class_<FireConfig>(m, "FireConfig")
        .def(py::init<>())
        .def(py::init([](std::int64_t s, std::int64_t e1, std::int64_t e3) {
            return FireConfig{s, e1, e3};
        }), py::arg("squeeze"), py::arg("expand1"), py::arg("expand3"))
        .def_readwrite("squeeze", &FireConfig::squeeze)
        .def_readwrite("expand1", &FireConfig::expand1)
        .def_readwrite("expand3", &FireConfig::expand3);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("n_a", &ModelConfig::n_a)
        .def_readwrite("n_t", &ModelConfig::n_t)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("codeword_len", &ModelConfig::codeword_len)
        .def_readwrite("n_encoder_blocks", &ModelConfig::n_encoder_blocks)
        .def_readwrite("n_decoder_blocks", &ModelConfig::n_decoder_blocks)
        .def_readwrite("ffn_hidden_delay", &ModelConfig::ffn_hidden_delay)
        .def_readwrite("ffn_hidden_angle", &ModelConfig::ffn_hidden_angle)
        .def_readwrite("cipn_branch_a_len", &ModelConfig::cipn_branch_a_len)
        .def_readwrite("stem_channels", &ModelConfig::stem_channels)
        .def_readwrite("fire", &ModelConfig::fire)
        .def_property("variant",
                      [](const ModelConfig& c) { return variant_name(c.variant); },
                      [](ModelConfig& c, const std::string& name) { c.variant = variant_from_name(name); })
        .def_property_readonly("raw_len", &ModelConfig::raw_len)
        .def("validate", &ModelConfig::validate);

    m.def("flops_linear", &flops_linear, py::arg("s"), py::arg("d_in"), py::arg("d_out"));
    m.def("flops_attention", &flops_attention, py::arg("s_q"), py::arg("s_kv"), py::arg("d"));
    m.def("flops_conv", &flops_conv, py::arg("c_in"), py::arg("c_out"), py::arg("kh"), py::arg("kw"),
          py::arg("h_out"), py::arg("w_out"));
    m.def("estimate_flops", [](const ModelConfig& cfg) {
        auto f = estimate_flops(cfg);
        py::dict out;
        out["encoder"] = f.encoder;
        out["cipn"] = f.cipn;
        out["decoder"] = f.decoder;
        out["total"] = f.total();
        return out;
    }, py::arg("config"));

    py::class_<CovNetModel<float>>(m, "Model")
        .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("init_seed") = 0)
        .def("encode", [](CovNetModel<float>& mdl, const farray& h) { return tensor_out(mdl.encode(tensor_in(h))); },
             py::arg("h"))
        .def("cipn",
             [](CovNetModel<float>& mdl, const farray& q, const farray& c) {
                 return tensor_out(mdl.cipn(tensor_in(q), tensor_in(c)));
             },
             py::arg("q_bar"), py::arg("c_bar"))
        .def("decode",
             [](CovNetModel<float>& mdl, const farray& v, const farray& v_c) {
                 return tensor_out(mdl.decode(tensor_in(v), tensor_in(v_c)));
             },
             py::arg("v"), py::arg("v_c"))
        .def("forward",
             [](CovNetModel<float>& mdl, const farray& h, const farray& q, const farray& c) {
                 return tensor_out(mdl.forward(tensor_in(h), tensor_in(q), tensor_in(c)));
             },
             py::arg("h"), py::arg("q_bar"), py::arg("c_bar"))
        .def_property_readonly("n_params", [](const CovNetModel<float>& mdl) { return mdl.params().total_scalars(); })
        .def("param_names", [](const CovNetModel<float>& mdl) {
            std::vector<std::string> names;
            for (std::size_t i = 0; i < mdl.params().size(); ++i) names.push_back(mdl.params().name(i));
            return names;
        })
        .def("save", [](const CovNetModel<float>& mdl, const std::string& path) { save_checkpoint(mdl.params(), path); },
             py::arg("path"))
        .def("load", [](CovNetModel<float>& mdl, const std::string& path) { load_checkpoint(mdl.params(), path); },
             py::arg("path"));
}
