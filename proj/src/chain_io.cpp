#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

#include "driftwatch/sampler.hpp"
#include "json.hpp"

namespace dw {

namespace {

using nlohmann::json;

// JSON has no representation for infinities (they would serialize as null),
// so log weights of empty components are clamped to the lowest finite double
// on the way out and nulls map back to -inf on the way in.
json vec_to_json(const VectorXd& v) {
    json out = json::array();
    for (long i = 0; i < v.size(); ++i)
        out.push_back(std::isfinite(v[i]) ? v[i]
                                          : -std::numeric_limits<double>::max());
    return out;
}

json mat_to_json(const MatrixXd& m) {
    json out = json::array();
    for (long r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

VectorXd vec_from_json(const json& j) {
    VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i)
        v[i] = j[i].is_null() ? -std::numeric_limits<double>::infinity()
                              : j[i].get<double>();
    return v;
}

MatrixXd mat_from_json(const json& j) {
    const long rows = static_cast<long>(j.size());
    const long cols = rows > 0 ? static_cast<long>(j[0].size()) : 0;
    MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    return m;
}

json mixture_to_json(const MixtureComponents& mix) {
    json comps = json::array();
    for (const auto& c : mix.comps)
        comps.push_back({{"mu", vec_to_json(c.mu)}, {"lambda", mat_to_json(c.lambda)}});
    return {{"log_pi", vec_to_json(mix.log_pi)}, {"components", comps}};
}

MixtureComponents mixture_from_json(const json& j) {
    MixtureComponents mix;
    mix.log_pi = vec_from_json(j.at("log_pi"));
    for (const auto& c : j.at("components"))
        mix.comps.push_back(
            make_component(vec_from_json(c.at("mu")), mat_from_json(c.at("lambda"))));
    return mix;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw error("cannot write " + p.string());
    f << std::setprecision(17);
    return f;
}

nlohmann::json sampler_config_to_json(const SamplerConfig& cfg) {
    return {{"q", cfg.q},
            {"alpha", cfg.alpha},
            {"n_restricted", cfg.n_restricted},
            {"max_regimes", cfg.max_regimes},
            {"trans_w", cfg.trans_w},
            {"trans_v", cfg.trans_v},
            {"update_wv", cfg.update_wv},
            {"wv_step", cfg.wv_step},
            {"wv_prior_shape", cfg.wv_prior_shape},
            {"wv_prior_rate", cfg.wv_prior_rate},
            {"fix_transition_prob", cfg.fix_transition_prob},
            {"fixed_stay_prob", cfg.fixed_stay_prob},
            {"update_mean_hyper", cfg.update_mean_hyper},
            {"lambda_a0", cfg.lambda_a0},
            {"lambda_b0", cfg.lambda_b0},
            {"graph_mode", graph_mode_name(cfg.graph_mode)},
            {"update_graph", cfg.update_graph},
            {"edge_prior", cfg.edge_prior},
            {"sigma_g", cfg.sigma_g},
            {"graph_flips_per_sweep", cfg.graph_flips_per_sweep},
            {"n_mc_norm", cfg.n_mc_norm},
            {"n_sweeps", cfg.n_sweeps},
            {"burn_in", cfg.burn_in},
            {"snapshot_every", cfg.snapshot_every},
            {"cutoff", cfg.cutoff},
            {"seed", cfg.seed},
            {"save_phi_trace", cfg.save_phi_trace}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
    SamplerConfig cfg;
    static const std::vector<std::string> known = {
        "q", "alpha", "n_restricted", "max_regimes", "trans_w", "trans_v",
        "update_wv", "wv_step", "wv_prior_shape", "wv_prior_rate",
        "fix_transition_prob", "fixed_stay_prob", "update_mean_hyper",
        "lambda_a0", "lambda_b0", "graph_mode", "update_graph", "edge_prior",
        "sigma_g", "graph_flips_per_sweep", "n_mc_norm", "n_sweeps", "burn_in",
        "snapshot_every", "cutoff", "seed", "save_phi_trace", "transform"};
    for (const auto& item : j.items())
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw error("unknown config key '" + item.key() + "'");

    if (j.contains("q")) cfg.q = j.at("q").get<int>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("n_restricted")) cfg.n_restricted = j.at("n_restricted").get<int>();
    if (j.contains("max_regimes")) cfg.max_regimes = j.at("max_regimes").get<int>();
    if (j.contains("trans_w")) cfg.trans_w = j.at("trans_w").get<double>();
    if (j.contains("trans_v")) cfg.trans_v = j.at("trans_v").get<double>();
    if (j.contains("update_wv")) cfg.update_wv = j.at("update_wv").get<bool>();
    if (j.contains("wv_step")) cfg.wv_step = j.at("wv_step").get<double>();
    if (j.contains("wv_prior_shape"))
        cfg.wv_prior_shape = j.at("wv_prior_shape").get<double>();
    if (j.contains("wv_prior_rate"))
        cfg.wv_prior_rate = j.at("wv_prior_rate").get<double>();
    if (j.contains("fix_transition_prob"))
        cfg.fix_transition_prob = j.at("fix_transition_prob").get<bool>();
    if (j.contains("fixed_stay_prob"))
        cfg.fixed_stay_prob = j.at("fixed_stay_prob").get<double>();
    if (j.contains("update_mean_hyper"))
        cfg.update_mean_hyper = j.at("update_mean_hyper").get<bool>();
    if (j.contains("lambda_a0")) cfg.lambda_a0 = j.at("lambda_a0").get<double>();
    if (j.contains("lambda_b0")) cfg.lambda_b0 = j.at("lambda_b0").get<double>();
    if (j.contains("graph_mode"))
        cfg.graph_mode = graph_mode_from_name(j.at("graph_mode").get<std::string>());
    if (j.contains("update_graph")) cfg.update_graph = j.at("update_graph").get<bool>();
    if (j.contains("edge_prior")) cfg.edge_prior = j.at("edge_prior").get<double>();
    if (j.contains("sigma_g")) cfg.sigma_g = j.at("sigma_g").get<double>();
    if (j.contains("graph_flips_per_sweep"))
        cfg.graph_flips_per_sweep = j.at("graph_flips_per_sweep").get<int>();
    if (j.contains("n_mc_norm")) cfg.n_mc_norm = j.at("n_mc_norm").get<int>();
    if (j.contains("n_sweeps")) cfg.n_sweeps = j.at("n_sweeps").get<int>();
    if (j.contains("burn_in")) cfg.burn_in = j.at("burn_in").get<int>();
    if (j.contains("snapshot_every"))
        cfg.snapshot_every = j.at("snapshot_every").get<int>();
    if (j.contains("cutoff")) cfg.cutoff = j.at("cutoff").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("save_phi_trace"))
        cfg.save_phi_trace = j.at("save_phi_trace").get<bool>();
    return cfg;
}

}  // namespace

std::string sampler_config_to_json_text(const SamplerConfig& cfg) {
    return sampler_config_to_json(cfg).dump(2);
}

SamplerConfig sampler_config_from_json_text(const std::string& text) {
    return sampler_config_from_json(json::parse(text));
}

void write_chain_outputs(const std::string& out_dir, const Sampler& sampler,
                         const ChainResult& result,
                         const std::vector<VectorXi>& phi_trace,
                         const DataStream& stream) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    {
        auto f = open_out(dir / "changepoint_probs.csv");
        f << "boundary_after_day,prob\n";
        for (long i = 0; i < result.change_prob.size(); ++i)
            f << (i + 1) << "," << result.change_prob[i] << "\n";
    }

    {
        json j;
        j["cutoff"] = sampler.config().cutoff;
        j["changepoints"] = result.changepoints;  // first day of each new regime
        json map_phi = json::array();
        for (long t = 0; t < result.map_phi.size(); ++t)
            map_phi.push_back(result.map_phi[t] + 1);  // report regimes 1-based
        j["map_regimes"] = map_phi;
        j["n_sweeps"] = result.n_sweeps;
        j["burn_in"] = result.burn_in;
        auto f = open_out(dir / "changepoints.json");
        f << j.dump(2) << "\n";
    }

    {
        json j;
        j["config"] = sampler_config_to_json(sampler.config());
        j["counters"] = {{"phi_split_attempt", result.counters.phi_split_attempt},
                         {"phi_split_accept", result.counters.phi_split_accept},
                         {"phi_merge_attempt", result.counters.phi_merge_attempt},
                         {"phi_merge_accept", result.counters.phi_merge_accept},
                         {"phi_swap_flips", result.counters.phi_swap_flips},
                         {"label_sm_attempt", result.counters.label_sm_attempt},
                         {"label_sm_accept", result.counters.label_sm_accept},
                         {"graph_attempt", result.counters.graph_attempt},
                         {"graph_accept", result.counters.graph_accept},
                         {"wv_attempt", result.counters.wv_attempt},
                         {"wv_accept", result.counters.wv_accept}};
        j["norm_const"] = {{"mc_calls", result.nc_counters.mc_calls},
                           {"laplace_calls", result.nc_counters.laplace_calls}};
        j["seconds"] = result.seconds;
        j["latent_static"] = sampler.latent_static();
        j["n_days"] = stream.n_days();
        j["n_vars"] = stream.n_vars();
        j["latent_dim"] = sampler.graph().size();
        j["graph_edges"] = sampler.graph().edge_count();
        if (!result.regime_trace.empty()) {
            double mean = 0.0;
            for (int m : result.regime_trace) mean += m;
            mean /= static_cast<double>(result.regime_trace.size());
            j["regimes_mean"] = mean;
            j["regimes_final"] = result.regime_trace.back();
        }
        auto f = open_out(dir / "chain_meta.json");
        f << j.dump(2) << "\n";
    }

    if (!phi_trace.empty()) {
        auto f = open_out(dir / "phi_trace.csv");
        f << "sweep";
        for (int t = 0; t < stream.n_days(); ++t) f << ",day_" << (t + 1);
        f << "\n";
        for (size_t s = 0; s < phi_trace.size(); ++s) {
            f << s;
            for (long t = 0; t < phi_trace[s].size(); ++t)
                f << "," << (phi_trace[s][t] + 1);
            f << "\n";
        }
    }

    {
        json arr = json::array();
        for (const auto& snap : result.snapshots)
            arr.push_back({{"sweep", snap.sweep},
                           {"boundary_day", snap.boundary_day},
                           {"before", mixture_to_json(snap.before)},
                           {"after", mixture_to_json(snap.after)}});
        json j = {{"snapshots", arr}};
        auto f = open_out(dir / "snapshots.json");
        f << j.dump(2) << "\n";
    }

    {
        json j;
        j["hyper"] = {{"m", vec_to_json(sampler.hyper().m)},
                      {"lambda", sampler.hyper().lambda},
                      {"nu", sampler.hyper().nu},
                      {"d", mat_to_json(sampler.hyper().d)}};
        j["trans_w"] = sampler.trans_w();
        j["trans_v"] = sampler.trans_v();
        j["stay_prob"] = vec_to_json(sampler.stay_prob());
        json phi = json::array();
        for (long t = 0; t < sampler.phi().size(); ++t)
            phi.push_back(sampler.phi()[t] + 1);
        j["regimes"] = phi;
        json edges = json::array();
        for (auto [a, b] : sampler.graph().edges())
            edges.push_back(json::array({a, b}));
        j["graph"] = {{"dim", sampler.graph().size()}, {"edges", edges}};
        json mixes = json::array();
        for (const auto& reg : sampler.regimes())
            mixes.push_back(mixture_to_json(reg.mix));
        j["regime_mixtures"] = mixes;
        json vars = json::array();
        for (const auto& v : stream.variables) vars.push_back(v.name);
        j["variables"] = vars;
        auto f = open_out(dir / "final_model.json");
        f << j.dump(2) << "\n";
    }

    {
        auto f = open_out(dir / "processed_vars.json");
        f << variable_specs_to_json(stream.variables) << "\n";
    }

    {
        auto f = open_out(dir / "daily_means.csv");
        f << "day,n_rows";
        for (const auto& v : stream.variables) f << "," << v.name;
        f << "\n";
        for (const auto& batch : stream.days) {
            f << batch.day << "," << batch.values.rows();
            for (long c = 0; c < batch.values.cols(); ++c) {
                double s = 0.0;
                long n = 0;
                for (long r = 0; r < batch.values.rows(); ++r)
                    if (!is_missing(batch.values(r, c))) {
                        s += batch.values(r, c);
                        ++n;
                    }
                if (n > 0)
                    f << "," << (s / static_cast<double>(n));
                else
                    f << ",";
            }
            f << "\n";
        }
    }
}

std::vector<MixtureSnapshot> read_snapshots(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot read " + path);
    json j = json::parse(f);
    std::vector<MixtureSnapshot> out;
    for (const auto& s : j.at("snapshots")) {
        MixtureSnapshot snap;
        snap.sweep = s.at("sweep").get<long>();
        snap.boundary_day = s.at("boundary_day").get<int>();
        snap.before = mixture_from_json(s.at("before"));
        snap.after = mixture_from_json(s.at("after"));
        out.push_back(std::move(snap));
    }
    return out;
}

FinalModel read_final_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot read " + path);
    json j = json::parse(f);

    FinalModel out;
    const auto& regs = j.at("regimes");
    out.phi.resize(regs.size());
    for (size_t t = 0; t < regs.size(); ++t)
        out.phi[static_cast<long>(t)] = regs[t].get<int>() - 1;
    for (const auto& m : j.at("regime_mixtures"))
        out.regime_mixtures.push_back(mixture_from_json(m));
    for (const auto& v : j.at("variables"))
        out.variables.push_back(v.get<std::string>());

    if (out.phi.size() == 0 || out.regime_mixtures.empty())
        throw error("final model file is empty: " + path);
    if (out.phi[out.phi.size() - 1] + 1 >
        static_cast<int>(out.regime_mixtures.size()))
        throw error("final model regimes exceed the stored mixtures");
    return out;
}

MatrixXd sample_observed_rows(Rng& rng, const std::vector<VariableSpec>& vars,
                              const LatentLayout& layout,
                              const MixtureComponents& mix, long n_rows) {
    if (layout.blocks.size() != vars.size())
        throw error("layout does not match the variable list");
    if (mix.q() < 1) throw error("mixture has no components");
    if (mix.comps[0].mu.size() != layout.dim)
        throw error("mixture dimension does not match the layout");

    std::vector<MatrixXd> chol;  // upper factors of each precision
    for (const auto& c : mix.comps) chol.push_back(chol_upper(c.lambda));
    VectorXd pi = mix.log_pi.array().exp();

    // indicator columns mask their source column after decoding
    std::vector<std::pair<int, int>> masks;  // (indicator var, source var)
    for (size_t v = 0; v < vars.size(); ++v)
        if (vars[v].is_indicator())
            for (size_t s = 0; s < vars.size(); ++s)
                if (vars[s].name == vars[v].indicator_for)
                    masks.push_back({static_cast<int>(v), static_cast<int>(s)});

    MatrixXd out(n_rows, static_cast<long>(vars.size()));
    VectorXd xi(layout.dim);
    for (long i = 0; i < n_rows; ++i) {
        int k = 0;
        if (mix.q() > 1) {
            double u = rng.uniform() * pi.sum();
            while (k + 1 < mix.q() && u > pi[k]) u -= pi[k], ++k;
        }
        const ComponentParams& c = mix.comps[k];
        for (long d = 0; d < layout.dim; ++d) xi[d] = rng.normal();
        VectorXd z = c.mu + chol[k].triangularView<Eigen::Upper>().solve(xi);

        for (const auto& b : layout.blocks) {
            const VariableSpec& v = vars[b.var];
            switch (v.kind) {
                case VariableKind::continuous:
                    out(i, b.var) = std::min(std::max(z[b.offset], v.lower), v.upper);
                    break;
                case VariableKind::binary:
                    out(i, b.var) = z[b.offset] >= 0.0 ? 1.0 : 0.0;
                    break;
                case VariableKind::ordinal: {
                    const auto& d = v.ordinal_levels;
                    const int last = static_cast<int>(d.size()) - 1;
                    int l = last;
                    for (int q = 0; q < last; ++q)
                        if (z[b.offset] <= d[q]) { l = q; break; }
                    out(i, b.var) = d[l];
                    break;
                }
                case VariableKind::nominal: {
                    int best = 0;
                    for (int q = 1; q < b.width; ++q)
                        if (z[b.offset + q] > z[b.offset + best]) best = q;
                    out(i, b.var) = static_cast<double>(best);
                    break;
                }
            }
        }
        for (const auto& mk : masks)
            if (out(i, mk.first) == 1.0) out(i, mk.second) = kNaN;
    }
    return out;
}

}  // namespace dw
