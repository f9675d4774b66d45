// Python bindings for the core operations: scenario simulation, the regime
// sampler, the T-squared baseline, detection scoring and distribution
// distances.  Data crosses the boundary as numpy arrays plus the same
// variable-spec JSON the command line tool uses.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "driftwatch/fault.hpp"
#include "driftwatch/simbench.hpp"

namespace py = pybind11;
using namespace dw;

namespace {

// rows carrying the same day id form one batch; ids must be nondecreasing,
// matching the CSV reader's contract
DataStream stream_from_arrays(const Eigen::Ref<const MatrixXd>& values,
                              const std::vector<long>& day,
                              const std::string& variables_json) {
    if (static_cast<long>(day.size()) != values.rows())
        throw error("day must have one entry per row of values");
    DataStream stream;
    stream.variables = parse_variable_specs(variables_json);
    if (static_cast<long>(stream.variables.size()) != values.cols())
        throw error("values has " + std::to_string(values.cols()) +
                    " columns but " + std::to_string(stream.variables.size()) +
                    " variables are declared");
    for (long i = 0; i < values.rows(); ++i) {
        if (stream.days.empty() || day[i] != stream.days.back().day) {
            if (!stream.days.empty() && day[i] < stream.days.back().day)
                throw error("day ids must be nondecreasing");
            DayBatch batch;
            batch.day = day[i];
            stream.days.push_back(batch);
        }
    }
    size_t d = 0;
    std::vector<long> counts(stream.days.size(), 0);
    for (long i = 0; i < values.rows(); ++i) {
        if (day[i] != stream.days[d].day) ++d;
        ++counts[d];
    }
    d = 0;
    long row_in_day = 0;
    for (size_t b = 0; b < stream.days.size(); ++b)
        stream.days[b].values.resize(counts[b], values.cols());
    for (long i = 0; i < values.rows(); ++i) {
        if (day[i] != stream.days[d].day) {
            ++d;
            row_in_day = 0;
        }
        stream.days[d].values.row(row_in_day++) = values.row(i);
    }
    return stream;
}

py::dict scenario_to_dict(const ScenarioData& sc) {
    long total = 0;
    for (const auto& batch : sc.stream.days) total += batch.values.rows();
    MatrixXd values(total, sc.stream.n_vars());
    std::vector<long> day(total);
    long at = 0;
    for (const auto& batch : sc.stream.days) {
        values.middleRows(at, batch.values.rows()) = batch.values;
        std::fill(day.begin() + at, day.begin() + at + batch.values.rows(),
                  batch.day);
        at += batch.values.rows();
    }
    py::dict out;
    out["values"] = values;
    out["day"] = day;
    out["variables_json"] = variable_specs_to_json(sc.stream.variables);
    out["change_after_day"] = sc.change_after_day;
    return out;
}

py::dict fit_arrays(const Eigen::Ref<const MatrixXd>& values,
                    const std::vector<long>& day,
                    const std::string& variables_json, int n_sweeps,
                    int burn_in, int q, std::uint64_t seed,
                    const std::string& graph_mode, double cutoff,
                    int snapshot_every, bool boxcox) {
    DataStream stream = stream_from_arrays(values, day, variables_json);
    const int n_indicators = add_missingness_indicators(stream);
    std::vector<std::string> warnings;
    const int n_dropped = drop_zero_variance(stream, warnings);
    if (boxcox) apply_boxcox(stream);

    SamplerConfig cfg;
    cfg.n_sweeps = n_sweeps;
    cfg.burn_in = burn_in;
    cfg.q = q;
    cfg.seed = seed;
    cfg.graph_mode = graph_mode_from_name(graph_mode);
    cfg.cutoff = cutoff;
    cfg.snapshot_every = snapshot_every;
    cfg.save_phi_trace = false;

    ChainResult res;
    {
        py::gil_scoped_release release;
        Sampler sampler(stream, cfg);
        res = sampler.run();
    }

    std::vector<int> map_regimes(res.map_phi.size());
    for (long t = 0; t < res.map_phi.size(); ++t)
        map_regimes[t] = res.map_phi[t] + 1;

    py::dict out;
    out["change_prob"] = VectorXd(res.change_prob);
    out["changepoints"] = res.changepoints;
    out["map_regimes"] = map_regimes;
    out["n_sweeps"] = res.n_sweeps;
    out["burn_in"] = res.burn_in;
    out["seconds"] = res.seconds;
    out["indicators_added"] = n_indicators;
    out["zero_variance_dropped"] = n_dropped;
    out["warnings"] = warnings;
    out["processed_variables_json"] = variable_specs_to_json(stream.variables);
    return out;
}

py::dict scan_arrays(const Eigen::Ref<const MatrixXd>& values,
                     const std::vector<long>& day,
                     const std::string& variables_json, int window,
                     double alpha) {
    DataStream stream = stream_from_arrays(values, day, variables_json);
    const HotellingScan scan = hotelling_scan(stream, window, alpha);
    py::dict out;
    out["stat"] = VectorXd(scan.stat);
    out["limit"] = VectorXd(scan.limit);
    out["flagged_days"] = scan.flagged_days;
    return out;
}

py::dict score_to_dict(const std::vector<int>& new_regime_days,
                       int change_after_day, int n_days, int grace) {
    const DetectionScore s =
        score_detection(new_regime_days, change_after_day, n_days, grace);
    py::dict out;
    out["detected"] = s.detected;
    out["n_false"] = s.n_false;
    out["n_eligible"] = s.n_eligible;
    out["fpr"] = s.fpr;
    return out;
}

double hellinger_gauss_py(const Eigen::Ref<const VectorXd>& mu1,
                          const Eigen::Ref<const MatrixXd>& sigma1,
                          const Eigen::Ref<const VectorXd>& mu2,
                          const Eigen::Ref<const MatrixXd>& sigma2) {
    return hellinger_gauss(make_moment_component(mu1, sigma1),
                           make_moment_component(mu2, sigma2));
}

}  // namespace

PYBIND11_MODULE(_driftwatch, m) {
    m.doc() =
        "change-point detection and fault diagnosis for daily-batched "
        "mixed-type data streams";
    m.attr("__version__") = "0.1.0";

    m.def("scenario_names", &scenario_names,
          "names of the built-in synthetic stream families");

    m.def(
        "generate_scenario",
        [](const std::string& name, std::uint64_t seed, int n_days,
           int rows_per_day) {
            return scenario_to_dict(
                generate_scenario(name, seed, n_days, rows_per_day));
        },
        py::arg("name"), py::arg("seed") = 1, py::arg("n_days") = 30,
        py::arg("rows_per_day") = 50,
        "draw a named synthetic stream; returns values (rows x variables, "
        "NaN = missing), per-row day ids, the variable declarations as JSON "
        "text, and the last day of the first regime (0 = no change)");

    m.def("fit", &fit_arrays, py::arg("values"), py::arg("day"),
          py::arg("variables_json"), py::arg("n_sweeps") = 300,
          py::arg("burn_in") = 60, py::arg("q") = 7, py::arg("seed") = 1,
          py::arg("graph_mode") = "sparse", py::arg("cutoff") = 0.5,
          py::arg("snapshot_every") = 5, py::arg("boxcox") = false,
          "run the regime sampler over a stream given as arrays; returns "
          "per-boundary change probabilities, flagged change days, and the "
          "most frequent regime assignment");

    m.def("hotelling_scan", &scan_arrays, py::arg("values"), py::arg("day"),
          py::arg("variables_json"), py::arg("window") = 3,
          py::arg("alpha") = 0.01,
          "two-sample T-squared scan of each day against the pooled trailing "
          "window (complete rows only)");

    m.def("score_detection", &score_to_dict, py::arg("new_regime_days"),
          py::arg("change_after_day"), py::arg("n_days"), py::arg("grace") = 2,
          "strict detection score: a hit must land exactly on the first "
          "changed day; flags on the grace days after it count neither way");

    m.def("hellinger_gauss", &hellinger_gauss_py, py::arg("mu1"),
          py::arg("sigma1"), py::arg("mu2"), py::arg("sigma2"),
          "exact Hellinger distance between two Gaussians in moment form");
}
