#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "chronon/config.hpp"
#include "chronon/correlator.hpp"
#include "chronon/peakfit.hpp"
#include "chronon/pipeline.hpp"
#include "chronon/qdsim.hpp"
#include "chronon/syncproto.hpp"
#include "chronon/timetags.hpp"
#include "chronon/tomography.hpp"

namespace py = pybind11;
using namespace chronon;

namespace {

// (channels u16, times u64) arrays -> TagStream
TagStream stream_from_arrays(py::array_t<std::uint16_t> channels,
                             py::array_t<std::uint64_t> times,
                             std::uint16_t channel_count) {
    if (channels.ndim() != 1 || times.ndim() != 1 || channels.size() != times.size())
        throw ArgumentError("channels and times must be 1-d arrays of equal length");
    const auto ch = channels.unchecked<1>();
    const auto t = times.unchecked<1>();
    std::vector<TimeTag> tags(static_cast<std::size_t>(channels.size()));
    for (py::ssize_t i = 0; i < channels.size(); ++i)
        tags[static_cast<std::size_t>(i)] = TimeTag{t(i), ch(i)};
    return TagStream(std::move(tags), channel_count);
}

py::tuple stream_to_arrays(const TagStream& s) {
    std::vector<std::uint16_t> ch(s.size());
    std::vector<std::uint64_t> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        ch[i] = s.tags()[i].channel;
        t[i] = s.tags()[i].time_ps;
    }
    return py::make_tuple(
        py::array_t<std::uint16_t>(static_cast<py::ssize_t>(ch.size()), ch.data()),
        py::array_t<std::uint64_t>(static_cast<py::ssize_t>(t.size()), t.data()));
}

py::array_t<std::uint64_t> counts_array(const CorrelationHistogram& h) {
    return py::array_t<std::uint64_t>(static_cast<py::ssize_t>(h.counts.size()),
                                      h.counts.data());
}

}  // namespace

PYBIND11_MODULE(_chronon, m) {
    m.doc() = "Quantum-dot two-way clock synchronization and tomography toolkit";

    py::register_exception<Error>(m, "ChrononError", PyExc_RuntimeError);

    // ---- timetags ----
    py::class_<TagStream>(m, "TagStream")
        .def(py::init(&stream_from_arrays), py::arg("channels"), py::arg("times"),
             py::arg("channel_count"))
        .def_property_readonly("channel_count", &TagStream::channel_count)
        .def("__len__", &TagStream::size)
        .def("count_in_channel", &TagStream::count_in_channel)
        .def("arrays", &stream_to_arrays,
             "Returns (channels, times_ps) as numpy arrays")
        .def("channel_times", [](const TagStream& s, std::uint16_t ch) {
            const auto v = channel_times(s, ch);
            return py::array_t<std::uint64_t>(static_cast<py::ssize_t>(v.size()),
                                              v.data());
        });

    m.def("read_stream",
          [](const std::filesystem::path& p) { return read_stream(p); });
    m.def("write_stream", &write_stream);
    m.def("slice_channel", &slice_channel);

    // ---- correlator ----
    py::class_<CorrelationHistogram>(m, "CorrelationHistogram")
        .def_readonly("tau_start_ps", &CorrelationHistogram::tau_start_ps)
        .def_readonly("bin_width_ps", &CorrelationHistogram::bin_width_ps)
        .def_readonly("n_a", &CorrelationHistogram::n_a)
        .def_readonly("n_b", &CorrelationHistogram::n_b)
        .def_property_readonly("counts", &counts_array)
        .def("bin_center_ps", &CorrelationHistogram::bin_center_ps)
        .def("total_counts", &CorrelationHistogram::total_counts);

    auto correlate_py = [](py::array_t<std::uint64_t> a, py::array_t<std::uint64_t> b,
                           std::int64_t lo, std::int64_t hi, std::int64_t w,
                           int threads) {
        const auto av = a.unchecked<1>();
        const auto bv = b.unchecked<1>();
        std::vector<std::uint64_t> va(av.data(0), av.data(0) + av.size());
        std::vector<std::uint64_t> vb(bv.data(0), bv.data(0) + bv.size());
        return correlate(va, vb, lo, hi, w, threads);
    };
    m.def("correlate", correlate_py, py::arg("a"), py::arg("b"),
          py::arg("tau_start_ps"), py::arg("tau_end_ps"), py::arg("bin_width_ps"),
          py::arg("threads") = 0);
    m.def("g2_normalize", &g2_normalize);
    m.def(
        "autocorrelate",
        [](py::array_t<std::uint64_t> a, std::int64_t lo, std::int64_t hi,
           std::int64_t w, int threads) {
            const auto av = a.unchecked<1>();
            std::vector<std::uint64_t> va(av.data(0), av.data(0) + av.size());
            return autocorrelate(va, lo, hi, w, threads);
        },
        py::arg("a"), py::arg("tau_start_ps"), py::arg("tau_end_ps"),
        py::arg("bin_width_ps"), py::arg("threads") = 0);

    py::class_<PeakSearchStage>(m, "PeakSearchStage")
        .def_readonly("bin_width_ps", &PeakSearchStage::bin_width_ps)
        .def_readonly("tau_ps", &PeakSearchStage::tau_ps)
        .def_readonly("significance", &PeakSearchStage::significance);
    py::class_<PeakSearchResult>(m, "PeakSearchResult")
        .def_readonly("tau_peak_ps", &PeakSearchResult::tau_peak_ps)
        .def_readonly("significance", &PeakSearchResult::significance)
        .def_readonly("refined_stages", &PeakSearchResult::refined_stages);
    m.def(
        "find_peak",
        [](py::array_t<std::uint64_t> a, py::array_t<std::uint64_t> b,
           std::int64_t lo, std::int64_t hi, std::int64_t target) {
            const auto av = a.unchecked<1>();
            const auto bv = b.unchecked<1>();
            std::vector<std::uint64_t> va(av.data(0), av.data(0) + av.size());
            std::vector<std::uint64_t> vb(bv.data(0), bv.data(0) + bv.size());
            return find_peak(va, vb, lo, hi, target);
        },
        py::arg("a"), py::arg("b"), py::arg("window_lo_ps"), py::arg("window_hi_ps"),
        py::arg("target_bin_ps"));

    // ---- peakfit ----
    py::class_<CascadeParams>(m, "CascadeParams")
        .def(py::init<>())
        .def_readwrite("amplitude", &CascadeParams::amplitude)
        .def_readwrite("osc_amplitude", &CascadeParams::osc_amplitude)
        .def_readwrite("tau_rise_ps", &CascadeParams::tau_rise_ps)
        .def_readwrite("tau_decay_ps", &CascadeParams::tau_decay_ps)
        .def_readwrite("omega_rad_per_ps", &CascadeParams::omega_rad_per_ps)
        .def_readwrite("phase_rad", &CascadeParams::phase_rad)
        .def_readwrite("background", &CascadeParams::background)
        .def_readwrite("t0_ps", &CascadeParams::t0_ps);
    py::class_<CascadeFit>(m, "CascadeFit")
        .def_readonly("value", &CascadeFit::value)
        .def_readonly("stderr", &CascadeFit::stderr_)
        .def_readonly("tau_max_ps", &CascadeFit::tau_max_ps)
        .def_readonly("tau_max_err_ps", &CascadeFit::tau_max_err_ps)
        .def_readonly("rss", &CascadeFit::rss)
        .def_readonly("chi2_reduced", &CascadeFit::chi2_reduced)
        .def_readonly("converged", &CascadeFit::converged);
    m.def("cascade_model", &cascade_model);
    m.def("fit_cascade",
          [](const CorrelationHistogram& h, std::optional<CascadeParams> init) {
              return fit_cascade(h, init);
          },
          py::arg("histogram"), py::arg("init") = std::nullopt);

    py::class_<G2Fit>(m, "G2Fit")
        .def_readonly("g2_zero", &G2Fit::g2_zero)
        .def_readonly("g2_zero_err", &G2Fit::g2_zero_err)
        .def_readonly("tau_decay_ps", &G2Fit::tau_decay_ps)
        .def_readonly("peak_indices", &G2Fit::peak_indices)
        .def_readonly("peak_amplitudes", &G2Fit::peak_amplitudes)
        .def_readonly("converged", &G2Fit::converged);
    m.def("fit_g2",
          [](const CorrelationHistogram& h, double rep) { return fit_g2(h, rep); },
          py::arg("histogram"), py::arg("rep_period_ps"));

    // ---- qdsim ----
    py::class_<qdsim::SourceParams>(m, "SourceParams")
        .def(py::init<>())
        .def_readwrite("rep_period_ps", &qdsim::SourceParams::rep_period_ps)
        .def_readwrite("pair_prob", &qdsim::SourceParams::pair_prob)
        .def_readwrite("tau_xx_ps", &qdsim::SourceParams::tau_xx_ps)
        .def_readwrite("tau_x_ps", &qdsim::SourceParams::tau_x_ps)
        .def_readwrite("fss_omega_rad_per_ps", &qdsim::SourceParams::fss_omega_rad_per_ps)
        .def_readwrite("blink_on_ms", &qdsim::SourceParams::blink_on_ms)
        .def_readwrite("blink_off_ms", &qdsim::SourceParams::blink_off_ms)
        .def_readwrite("background_rate_hz", &qdsim::SourceParams::background_rate_hz);
    py::class_<qdsim::LinkParams>(m, "LinkParams")
        .def(py::init<>())
        .def_readwrite("one_way_delay_ps", &qdsim::LinkParams::one_way_delay_ps)
        .def_readwrite("inserted_delay_ps", &qdsim::LinkParams::inserted_delay_ps)
        .def_readwrite("reflectance", &qdsim::LinkParams::reflectance)
        .def_readwrite("transmit_loss_db", &qdsim::LinkParams::transmit_loss_db)
        .def_readwrite("return_loss_db", &qdsim::LinkParams::return_loss_db)
        .def_readwrite("group_index", &qdsim::LinkParams::group_index)
        .def_readwrite("birefringence_theta_rad",
                       &qdsim::LinkParams::birefringence_theta_rad)
        .def_readwrite("birefringence_phi_rad",
                       &qdsim::LinkParams::birefringence_phi_rad);
    py::class_<qdsim::ClockParams>(m, "ClockParams")
        .def(py::init<>())
        .def_readwrite("offset_s", &qdsim::ClockParams::offset_s)
        .def_readwrite("offset_ps", &qdsim::ClockParams::offset_ps)
        .def_readwrite("drift_ppb", &qdsim::ClockParams::drift_ppb)
        .def("set_uniform_jitter", &qdsim::ClockParams::set_uniform_jitter);
    py::class_<qdsim::MeasurementConfig>(m, "MeasurementConfig")
        .def_static("unpolarized", &qdsim::MeasurementConfig::unpolarized)
        .def_static("from_label", &qdsim::MeasurementConfig::from_label)
        .def_readonly("label", &qdsim::MeasurementConfig::label);
    py::class_<qdsim::GroundTruth>(m, "GroundTruth")
        .def_readonly("offset_total_ps", &qdsim::GroundTruth::offset_total_ps)
        .def_readonly("one_way_delay_ps", &qdsim::GroundTruth::one_way_delay_ps)
        .def_readonly("round_trip_delay_ps", &qdsim::GroundTruth::round_trip_delay_ps)
        .def_readonly("expected_one_way_t0_ps",
                      &qdsim::GroundTruth::expected_one_way_t0_ps)
        .def_readonly("pairs_emitted", &qdsim::GroundTruth::pairs_emitted)
        .def_readonly("signal_counts", &qdsim::GroundTruth::signal_counts);
    m.def("simulate_run", &qdsim::simulate_run, py::arg("source"), py::arg("link"),
          py::arg("clock"), py::arg("measurement"), py::arg("duration_s"),
          py::arg("seed"));

    // ---- syncproto ----
    py::class_<SyncReport>(m, "SyncReport")
        .def_readonly("tau_one_way_ps", &SyncReport::tau_one_way_ps)
        .def_readonly("tau_round_trip_ps", &SyncReport::tau_round_trip_ps)
        .def_readonly("raw_offset_s", &SyncReport::raw_offset_s)
        .def_readonly("compensated_offset_s", &SyncReport::compensated_offset_s)
        .def_readonly("raw_fine_ps", &SyncReport::raw_fine_ps)
        .def_readonly("compensated_fine_ps", &SyncReport::compensated_fine_ps)
        .def_readonly("offset_err_ps", &SyncReport::offset_err_ps)
        .def_readonly("kappa_ps", &SyncReport::kappa_ps);
    m.def("compute_sync", &compute_sync, py::arg("fit_oneway"), py::arg("fit_roundtrip"),
          py::arg("coarse_offset_s"), py::arg("kappa_ps"));
    m.def("cascade_shape_kappa_ps", &cascade_shape_kappa_ps);
    py::class_<DelayVerification>(m, "DelayVerification")
        .def_readonly("one_way_shift_ps", &DelayVerification::one_way_shift_ps)
        .def_readonly("round_trip_shift_ps", &DelayVerification::round_trip_shift_ps)
        .def_readonly("ratio", &DelayVerification::ratio)
        .def_readonly("pass_", &DelayVerification::pass);
    m.def("verify_delay_insertion", &verify_delay_insertion, py::arg("before"),
          py::arg("after"), py::arg("tolerance") = 0.1);
    m.def("path_length_from_roundtrip_m", &path_length_from_roundtrip_m,
          py::arg("tau_rt_ps"), py::arg("group_index"));
    m.def("apply_offset", [](const TagStream& s, const SyncReport& r) {
        return apply_offset(s, r);
    });

    // ---- tomography ----
    py::class_<tomo::WaveplateCorrection> wp(m, "WaveplateCorrection");
    py::enum_<tomo::WaveplateCorrection::Target>(wp, "Target")
        .value("Exciton", tomo::WaveplateCorrection::Target::Exciton)
        .value("Biexciton", tomo::WaveplateCorrection::Target::Biexciton)
        .value("Both", tomo::WaveplateCorrection::Target::Both);
    wp.def(py::init<>())
        .def_readwrite("theta_rad", &tomo::WaveplateCorrection::theta_rad)
        .def_readwrite("phi_rad", &tomo::WaveplateCorrection::phi_rad)
        .def_readwrite("target", &tomo::WaveplateCorrection::target);

    m.def("phi_plus", &tomo::phi_plus);
    m.def("mle_reconstruct",
          [](const std::vector<std::tuple<std::string, std::uint64_t>>& counts) {
              if (counts.size() != 16)
                  throw ArgumentError("mle_reconstruct: expected 16 (label, counts)");
              tomo::SettingCounts sc;
              for (std::size_t i = 0; i < 16; ++i) {
                  const auto cfg =
                      qdsim::MeasurementConfig::from_label(std::get<0>(counts[i]));
                  sc[i].x = cfg.projection_x;
                  sc[i].xx = cfg.projection_xx;
                  sc[i].coincidences = std::get<1>(counts[i]);
              }
              return tomo::mle_reconstruct(sc);
          },
          "Reconstruct a density matrix from 16 (label, coincidences) pairs");
    m.def("apply_waveplate", &tomo::apply_waveplate);
    m.def("fidelity", &tomo::fidelity);
    m.def("concurrence", &tomo::concurrence);
    m.def("setting_probability",
          [](const Eigen::Matrix4cd& rho, const std::string& label) {
              const auto cfg = qdsim::MeasurementConfig::from_label(label);
              return tomo::setting_probability(rho, cfg.projection_x,
                                               cfg.projection_xx);
          });
    m.def("default_tomography_labels", [] {
        std::vector<std::string> labels;
        for (const auto& s : qdsim::default_tomography_settings())
            labels.push_back(s.label);
        return labels;
    });

    m.attr("__version__") = "0.1.0";
}
