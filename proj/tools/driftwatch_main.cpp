// driftwatch: change-point detection and fault diagnosis for daily-batched
// mixed-type data streams.
//
// Subcommands
//   simulate   draw a named synthetic stream to data.csv / variables.json / truth.json
//   fit        run the regime sampler over a CSV stream, writing the posterior
//              log directory (change-point probabilities, snapshots, model)
//   faults     attribute a fitted boundary's distribution change to variables
//   calibrate  recommend a change-probability cutoff for a target false
//              positive rate by refitting simulated replicas of a fit
//   bench      run scenario x replication detection benchmarks with the
//              trailing-window T-squared baseline
//
// Every command writes a manifest.json into its output directory and exits
// nonzero with a single "error: ..." line on failure.
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "driftwatch/fault.hpp"
#include "driftwatch/simbench.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw dw::error("cannot read " + path);
    return json::parse(f);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw dw::error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw dw::error("cannot write " + path.string());
    f << text;
    if (!f) throw dw::error("failed while writing " + path.string());
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config_echo, std::uint64_t seed, double seconds,
                    const std::vector<std::string>& outputs,
                    json extra = json::object()) {
    json j = {{"command", command},
              {"config", config_echo},
              {"seed", seed},
              {"versions", {{"driftwatch", kVersion}}},
              {"seconds", seconds},
              {"outputs", outputs}};
    for (auto& item : extra.items()) j[item.key()] = item.value();
    write_text_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

// flag values shared by the fitting commands; -1 / empty mean "keep"
struct SamplerFlags {
    std::string config_path;
    std::int64_t seed = -1;
    int iterations = -1;
    int burn_in = -1;
    double cutoff = -1.0;
    std::string graph_mode;
    int snapshot_stride = -1;
    int q = -1;
    int threads = 1;
};

void add_sampler_flags(CLI::App* cmd, SamplerFlags* f) {
    cmd->add_option("--config", f->config_path,
                    "JSON file with sampler settings (flags override it)");
    cmd->add_option("--seed", f->seed, "random seed");
    cmd->add_option("--iterations", f->iterations, "MCMC sweeps");
    cmd->add_option("--burn-in", f->burn_in, "sweeps discarded before summaries");
    cmd->add_option("--cutoff", f->cutoff,
                    "change probability that calls a change-point");
    cmd->add_option("--graph-mode", f->graph_mode,
                    "graph handling: sparse, full, or decomposable")
        ->check(CLI::IsMember({"sparse", "full", "decomposable"}));
    cmd->add_option("--snapshot-stride", f->snapshot_stride,
                    "record boundary snapshots every this many sweeps");
    cmd->add_option("--q", f->q, "mixture components per regime");
    cmd->add_option("--threads", f->threads,
                    "worker threads for replication loops");
}

// layered configuration: defaults, then the config file, then explicit flags
dw::SamplerConfig resolve_config(const SamplerFlags& f,
                                 const dw::SamplerConfig& base, json* echo) {
    dw::SamplerConfig cfg = base;
    if (!f.config_path.empty())
        cfg = dw::sampler_config_from_json_text(read_text_file(f.config_path));
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.iterations > 0) cfg.n_sweeps = f.iterations;
    if (f.burn_in >= 0) cfg.burn_in = f.burn_in;
    if (f.cutoff >= 0.0) cfg.cutoff = f.cutoff;
    if (!f.graph_mode.empty()) cfg.graph_mode = dw::graph_mode_from_name(f.graph_mode);
    if (f.snapshot_stride > 0) cfg.snapshot_every = f.snapshot_stride;
    if (f.q > 0) cfg.q = f.q;
    if (cfg.burn_in >= cfg.n_sweeps)
        cfg.burn_in = std::max(0, cfg.n_sweeps / 5);
    *echo = json::parse(dw::sampler_config_to_json_text(cfg));
    return cfg;
}

bool config_wants_boxcox(const std::string& config_path) {
    if (config_path.empty()) return false;
    json j = read_json_file(config_path);
    return j.contains("transform") && j.at("transform").get<std::string>() == "boxcox";
}

// ---- simulate ----

int run_simulate(const std::string& scenario, const std::string& out,
                 std::uint64_t seed, int days, int rows) {
    Timer timer;
    dw::ScenarioData data = dw::generate_scenario(scenario, seed, days, rows);

    fs::create_directories(out);
    const fs::path dir(out);
    dw::write_csv_stream((dir / "data.csv").string(), data.stream);
    write_text_file(dir / "variables.json",
                    dw::variable_specs_to_json(data.stream.variables) + "\n");
    json truth = {{"scenario", scenario},
                  {"seed", seed},
                  {"n_days", days},
                  {"rows_per_day", rows},
                  {"change_after_day", data.change_after_day},
                  {"changepoints", data.change_after_day > 0
                                       ? json::array({data.change_after_day})
                                       : json::array()}};
    write_text_file(dir / "truth.json", truth.dump(2) + "\n");

    json echo = {{"scenario", scenario}, {"n_days", days}, {"rows_per_day", rows}};
    write_manifest(dir, "simulate", echo, seed, timer.seconds(),
                   {"data.csv", "variables.json", "truth.json"});
    return 0;
}

// ---- fit ----

int run_fit(const std::string& data_path, const std::string& vars_path,
            const std::string& out, const SamplerFlags& flags) {
    Timer timer;
    auto specs = dw::load_variable_specs(vars_path);
    dw::DataStream stream = dw::read_csv_stream(data_path, specs);

    const int n_indicators = dw::add_missingness_indicators(stream);
    std::vector<std::string> warnings;
    const int n_dropped = dw::drop_zero_variance(stream, warnings);
    json boxcox_echo = json::array();
    if (config_wants_boxcox(flags.config_path)) {
        auto lams = dw::apply_boxcox(stream);
        for (size_t j = 0; j < lams.size(); ++j)
            if (lams[j])
                boxcox_echo.push_back({{"variable", stream.variables[j].name},
                                       {"lambda", lams[j]->lambda},
                                       {"shift", lams[j]->shift}});
    }

    json echo;
    dw::SamplerConfig cfg = resolve_config(flags, dw::SamplerConfig{}, &echo);

    fs::create_directories(out);
    dw::Sampler sampler(stream, cfg);
    dw::ChainResult res = sampler.run(out);

    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    json extra = {{"n_days", stream.n_days()},
                  {"n_vars", stream.n_vars()},
                  {"indicators_added", n_indicators},
                  {"zero_variance_dropped", n_dropped},
                  {"warnings", warnings},
                  {"boxcox", boxcox_echo},
                  {"changepoints", res.changepoints},
                  {"sampler_seconds", res.seconds}};
    write_manifest(out, "fit", echo, cfg.seed, timer.seconds(),
                   {"changepoint_probs.csv", "changepoints.json", "chain_meta.json",
                    "snapshots.json", "final_model.json", "processed_vars.json",
                    "daily_means.csv"},
                   extra);
    return 0;
}

// ---- faults ----

int run_faults(const std::string& run_dir, const std::string& out_opt, int day,
               int n_mc, std::uint64_t seed) {
    Timer timer;
    const fs::path run(run_dir);
    const fs::path out = out_opt.empty() ? run : fs::path(out_opt);

    auto snaps = dw::read_snapshots((run / "snapshots.json").string());
    if (snaps.empty())
        throw dw::error("no boundary snapshots in " + run_dir +
                        " (single-regime fit or snapshots disabled)");
    auto specs = dw::load_variable_specs((run / "processed_vars.json").string());
    dw::LatentLayout layout = dw::LatentLayout::build(specs);

    int use_day = day;
    if (use_day <= 0) {
        // default: the boundary day most snapshots agree on
        std::map<int, int> freq;
        for (const auto& s : snaps) ++freq[s.boundary_day];
        int best = 0;
        for (const auto& kv : freq)
            if (kv.second > best) { best = kv.second; use_day = kv.first; }
    }
    std::vector<dw::MixtureSnapshot> picked;
    for (const auto& s : snaps)
        if (s.boundary_day == use_day) picked.push_back(s);
    if (picked.empty())
        throw dw::error("no snapshots at boundary day " + std::to_string(use_day));

    dw::FaultConfig cfg;
    cfg.n_mc = n_mc;
    cfg.seed = seed;
    dw::FaultReport rep = dw::fault_report(picked, specs, layout, cfg);

    fs::create_directories(out);
    dw::write_fault_outputs(out.string(), rep);

    // annotate the report with the boundary analyzed, and flag boundaries
    // whose fitted before/after distributions barely differ
    json report = read_json_file((out / "fault_report.json").string());
    report["boundary_day"] = use_day;
    std::string warning;
    if (rep.h < 1e-8) {
        warning =
            "distributions on both sides of this boundary are numerically "
            "identical; attribution shares are undefined";
        report["warning"] = warning;
        std::cerr << "warning: " << warning << "\n";
    }
    write_text_file(out / "fault_report.json", report.dump(2) + "\n");

    std::vector<std::string> outputs = {"fault_report.json", "fault_losses.csv"};
    if (!fs::equivalent(out, run) && fs::exists(run / "daily_means.csv")) {
        fs::copy_file(run / "daily_means.csv", out / "daily_means.csv",
                      fs::copy_options::overwrite_existing);
        outputs.push_back("daily_means.csv");
    }

    json echo = {{"run", run_dir},
                 {"boundary_day", use_day},
                 {"n_snapshots", static_cast<int>(picked.size())},
                 {"n_mc", n_mc}};
    json extra = {{"hellinger", rep.h}};
    if (!warning.empty()) extra["warning"] = warning;
    write_manifest(out, "faults", echo, seed, timer.seconds(), outputs, extra);
    return 0;
}

// ---- calibrate ----

int run_calibrate(const std::string& run_dir, const std::string& out_opt,
                  double target_fpr, int n_cal, const SamplerFlags& flags) {
    Timer timer;
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0))
        throw dw::error("--target-fpr must lie in [0, 1]");
    const fs::path run(run_dir);
    const fs::path out = out_opt.empty() ? run : fs::path(out_opt);

    dw::FinalModel model = dw::read_final_model((run / "final_model.json").string());
    auto specs = dw::load_variable_specs((run / "processed_vars.json").string());
    dw::LatentLayout layout = dw::LatentLayout::build(specs);
    const int t_days = static_cast<int>(model.phi.size());

    // reference regime vector: the most frequent posterior draw if it is
    // compatible with the stored per-regime models, else the final draw
    dw::VectorXi ref_phi = model.phi;
    bool used_map = false;
    json cps = read_json_file((run / "changepoints.json").string());
    if (cps.contains("map_regimes")) {
        std::vector<int> mr = cps.at("map_regimes").get<std::vector<int>>();
        if (static_cast<int>(mr.size()) == t_days &&
            mr.back() <= static_cast<int>(model.regime_mixtures.size())) {
            for (int t = 0; t < t_days; ++t) ref_phi[t] = mr[t] - 1;
            used_map = true;
        }
    }

    // per-day row counts of the original stream
    std::vector<long> day_rows(t_days, 0);
    {
        std::ifstream f(run / "daily_means.csv");
        if (!f) throw dw::error("cannot read " + (run / "daily_means.csv").string());
        std::string line;
        std::getline(f, line);  // header
        int t = 0;
        while (std::getline(f, line) && t < t_days) {
            const size_t c1 = line.find(',');
            const size_t c2 = line.find(',', c1 + 1);
            day_rows[t++] = std::stol(line.substr(c1 + 1, c2 - c1 - 1));
        }
        if (t != t_days) throw dw::error("daily_means.csv does not cover every day");
    }

    // refit configuration: the original fit's settings unless overridden
    dw::SamplerConfig base;
    json meta = read_json_file((run / "chain_meta.json").string());
    if (meta.contains("config"))
        base = dw::sampler_config_from_json_text(meta.at("config").dump());
    base.save_phi_trace = false;
    json echo;
    dw::SamplerConfig refit_cfg = resolve_config(flags, base, &echo);
    const std::uint64_t cal_seed = refit_cfg.seed;

    // boundary indices (0-based: boundary i sits after day i+1) of the
    // reference vector, plus the two-day grace window after each
    std::vector<bool> is_true(t_days - 1, false), in_grace(t_days - 1, false);
    for (int t = 1; t < t_days; ++t)
        if (ref_phi[t] != ref_phi[t - 1]) {
            is_true[t - 1] = true;
            for (int g = t; g < std::min(t + 2, t_days - 1); ++g) in_grace[g] = true;
        }

    std::vector<double> false_probs;
    std::vector<std::uint64_t> rep_seeds;
    dw::Rng sim_rng(dw::mix_seed(cal_seed, 0x63616cULL));
    for (int rep = 0; rep < n_cal; ++rep) {
        dw::DataStream sim;
        sim.variables = specs;
        for (int t = 0; t < t_days; ++t) {
            dw::DayBatch batch;
            batch.day = t + 1;
            batch.values = dw::sample_observed_rows(
                sim_rng, specs, layout, model.regime_mixtures[ref_phi[t]],
                day_rows[t]);
            sim.days.push_back(std::move(batch));
        }

        dw::SamplerConfig cfg = refit_cfg;
        cfg.seed = dw::mix_seed(cal_seed, 7000 + rep);
        rep_seeds.push_back(cfg.seed);
        dw::Sampler sampler(sim, cfg);
        dw::ChainResult res = sampler.run();
        for (int i = 0; i < t_days - 1; ++i)
            if (!is_true[i] && !in_grace[i]) false_probs.push_back(res.change_prob[i]);
    }

    // smallest cutoff whose false positive rate meets the target; a boundary
    // flags when its probability reaches the cutoff, so candidates are the
    // observed false probabilities plus one kept-sweep increment above each
    const double n_tests = static_cast<double>(false_probs.size());
    auto fpr_at = [&](double c) {
        long hits = 0;
        for (double p : false_probs)
            if (p >= c) ++hits;
        return n_tests > 0 ? hits / n_tests : 0.0;
    };
    const double step =
        1.0 / std::max(1, refit_cfg.n_sweeps - refit_cfg.burn_in);
    std::vector<double> candidates = {0.0, 1.0};
    for (double f : false_probs) {
        candidates.push_back(f);
        candidates.push_back(std::min(1.0, f + step));
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    double cutoff = 1.0, achieved = fpr_at(1.0);
    for (double c : candidates)
        if (fpr_at(c) <= target_fpr) { cutoff = c; achieved = fpr_at(c); break; }

    std::vector<int> ref_boundaries;
    for (int i = 0; i < t_days - 1; ++i)
        if (is_true[i]) ref_boundaries.push_back(i + 1);

    fs::create_directories(out);
    json result = {{"recommended_cutoff", cutoff},
                   {"target_fpr", target_fpr},
                   {"achieved_fpr", achieved},
                   {"n_cal", n_cal},
                   {"n_false_tests", static_cast<long>(false_probs.size())},
                   {"reference_change_after_days", ref_boundaries},
                   {"reference_is_map", used_map},
                   {"refit_seeds", rep_seeds}};
    write_text_file(out / "calibration.json", result.dump(2) + "\n");

    json extra = {{"n_cal", n_cal},
                  {"refit_seeds", rep_seeds},
                  {"recommended_cutoff", cutoff},
                  {"note", "each refit reruns the full sampler; expect roughly "
                           "n_cal times the original fit cost"}};
    write_manifest(out, "calibrate", echo, cal_seed, timer.seconds(),
                   {"calibration.json"}, extra);
    return 0;
}

// ---- bench ----

int run_bench_cmd(const std::string& out, std::vector<std::string> scenarios,
                  int reps, bool long_mode, int days, int rows,
                  const SamplerFlags& flags) {
    Timer timer;
    dw::BenchConfig cfg;
    if (!scenarios.empty()) cfg.scenarios = std::move(scenarios);
    cfg.n_reps = long_mode ? 50 : reps;
    cfg.n_days = days;
    cfg.rows_per_day = rows;
    json echo;
    cfg.sampler = resolve_config(flags, cfg.sampler, &echo);
    cfg.seed = cfg.sampler.seed;
    cfg.sampler.save_phi_trace = false;

    std::vector<dw::BenchRow> table = dw::run_bench(cfg);

    fs::create_directories(out);
    const fs::path dir(out);
    dw::write_bench_csv((dir / "bench_results.csv").string(), table);

    json echo_all = {{"scenarios", cfg.scenarios},
                     {"n_reps", cfg.n_reps},
                     {"n_days", cfg.n_days},
                     {"rows_per_day", cfg.rows_per_day},
                     {"sampler", echo}};
    write_manifest(dir, "bench", echo_all, cfg.seed, timer.seconds(),
                   {"bench_results.csv"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"change-point detection for daily-batched mixed-type streams"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw a named synthetic stream");
    std::string sim_scenario, sim_out;
    std::uint64_t sim_seed = 1;
    int sim_days = 30, sim_rows = 50;
    sim->add_option("--scenario", sim_scenario, "stream family name")->required();
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--days", sim_days, "number of days");
    sim->add_option("--rows", sim_rows, "rows per day");

    // fit
    auto* fit = app.add_subcommand("fit", "fit the regime sampler to a stream");
    std::string fit_data, fit_vars, fit_out;
    SamplerFlags fit_flags;
    fit->add_option("--data", fit_data, "input CSV (day column + variables)")
        ->required();
    fit->add_option("--vars", fit_vars, "variable declarations JSON")->required();
    fit->add_option("--out", fit_out, "posterior log directory")->required();
    add_sampler_flags(fit, &fit_flags);

    // faults
    auto* flt = app.add_subcommand("faults",
                                   "rank variables driving a fitted boundary");
    std::string flt_run, flt_out;
    int flt_day = 0, flt_mc = 20000;
    std::uint64_t flt_seed = 1;
    flt->add_option("--run", flt_run, "fit output directory")->required();
    flt->add_option("--out", flt_out, "output directory (default: the run)");
    flt->add_option("--day", flt_day,
                    "boundary day to analyze (default: the modal one)");
    flt->add_option("--samples", flt_mc, "Monte Carlo samples per distance");
    flt->add_option("--seed", flt_seed, "random seed");

    // calibrate
    auto* cal = app.add_subcommand(
        "calibrate", "recommend a cutoff for a target false positive rate");
    std::string cal_run, cal_out;
    double cal_target = 0.05;
    int cal_n = 5;
    SamplerFlags cal_flags;
    cal->add_option("--run", cal_run, "fit output directory")->required();
    cal->add_option("--target-fpr", cal_target, "acceptable false positive rate")
        ->required();
    cal->add_option("--n-cal", cal_n, "simulated replica datasets");
    cal->add_option("--out", cal_out, "output directory (default: the run)");
    add_sampler_flags(cal, &cal_flags);

    // bench
    auto* ben = app.add_subcommand("bench", "scenario detection benchmark");
    std::string ben_out;
    std::vector<std::string> ben_scenarios;
    int ben_reps = 10, ben_days = 30, ben_rows = 50;
    bool ben_long = false;
    SamplerFlags ben_flags;
    ben->add_option("--out", ben_out, "output directory")->required();
    ben->add_option("--scenarios", ben_scenarios, "scenario names (default: all)");
    ben->add_option("--reps", ben_reps, "replications per scenario");
    ben->add_flag("--long", ben_long, "run the 50-replication study");
    ben->add_option("--days", ben_days, "days per stream");
    ben->add_option("--rows", ben_rows, "rows per day");
    add_sampler_flags(ben, &ben_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return run_simulate(sim_scenario, sim_out, sim_seed, sim_days, sim_rows);
        if (fit->parsed()) return run_fit(fit_data, fit_vars, fit_out, fit_flags);
        if (flt->parsed())
            return run_faults(flt_run, flt_out, flt_day, flt_mc, flt_seed);
        if (cal->parsed())
            return run_calibrate(cal_run, cal_out, cal_target, cal_n, cal_flags);
        if (ben->parsed())
            return run_bench_cmd(ben_out, ben_scenarios, ben_reps, ben_long,
                                 ben_days, ben_rows, ben_flags);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
    return 0;
}
