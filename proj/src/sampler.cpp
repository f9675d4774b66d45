#include "driftwatch/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

namespace dw {

std::string graph_mode_name(GraphMode m) {
    switch (m) {
        case GraphMode::full: return "full";
        case GraphMode::sparse: return "sparse";
        case GraphMode::decomposable: return "decomposable";
    }
    throw error("unreachable graph mode");
}

GraphMode graph_mode_from_name(const std::string& s) {
    if (s == "full") return GraphMode::full;
    if (s == "sparse") return GraphMode::sparse;
    if (s == "decomposable") return GraphMode::decomposable;
    throw error("unknown graph mode '" + s + "'");
}

namespace {

NGWHyper initial_hyper(const DataStream& stream, const LatentLayout& layout) {
    std::vector<MatrixXd> z = init_latent(stream, layout);
    const int j = layout.dim;
    GaussStats pooled(j);
    for (const auto& m : z) pooled.add_rows(m);
    if (pooled.n < 2) throw error("need at least 2 rows to fit");

    NGWHyper h;
    h.m = pooled.mean();
    h.lambda = 1.0;
    h.nu = static_cast<double>(j) + 3.0;
    MatrixXd cov = pooled.centered_scatter() / static_cast<double>(pooled.n);
    double ridge = cov.trace() / static_cast<double>(j);
    if (!(ridge > 0.0)) ridge = 1.0;
    h.d = (h.nu - 2.0) * (cov + 0.05 * ridge * MatrixXd::Identity(j, j));
    return h;
}

bool detect_static_latent(const DataStream& stream) {
    for (const auto& v : stream.variables)
        if (v.kind != VariableKind::continuous) return false;
    for (const auto& d : stream.days)
        for (long i = 0; i < d.values.rows(); ++i)
            for (int j = 0; j < stream.n_vars(); ++j) {
                double y = d.values(i, j);
                if (is_missing(y)) return false;
                const VariableSpec& v = stream.variables[j];
                if (std::isfinite(v.lower) && y <= v.lower) return false;
                if (std::isfinite(v.upper) && y >= v.upper) return false;
            }
    return true;
}

}  // namespace

Sampler::Sampler(const DataStream& stream, SamplerConfig cfg)
    : stream_(stream),
      cfg_(cfg),
      layout_(LatentLayout::build(stream.variables)),
      hyper_(initial_hyper(stream, layout_)),
      graph_(cfg.graph_mode == GraphMode::full ? Graph::complete(layout_.dim)
                                               : Graph(layout_.dim)),
      router_(hyper_.nu, hyper_.d, cfg.n_mc_norm, mix_seed(cfg.seed, 0x6e6f726d)),
      rng_(cfg.seed) {
    if (stream_.n_days() < 1) throw error("fit needs at least one day of data");
    if (cfg_.q < 1) throw error("mixture truncation must be at least 1");
    if (cfg_.burn_in >= cfg_.n_sweeps) throw error("burn-in must be below the sweep count");
    if (cfg_.edge_prior <= 0.0 || cfg_.edge_prior >= 1.0)
        throw error("edge prior must lie strictly between 0 and 1");

    z_ = init_latent(stream_, layout_);
    latent_static_ = detect_static_latent(stream_);

    const int t = stream_.n_days();
    r_cap_ = std::min(t, cfg_.max_regimes);
    phi_ = VectorXi::Zero(t);
    // random initial labels: starting every row in one component leaves the
    // remaining sticks empty, and chains on strongly clustered data can take
    // a long time to populate them from prior draws alone
    labels_.resize(t);
    for (int d = 0; d < t; ++d) {
        labels_[d] = VectorXi::Zero(z_[d].rows());
        for (long i = 0; i < labels_[d].size(); ++i)
            labels_[d][i] = rng_.uniform_int(cfg_.q);
    }

    trans_w_ = cfg_.trans_w;
    trans_v_ = cfg_.trans_v;
    stay_prob_ = VectorXd::Constant(r_cap_, cfg_.fix_transition_prob
                                                ? cfg_.fixed_stay_prob
                                                : 0.5);

    std::vector<int> all_days(t);
    for (int d = 0; d < t; ++d) all_days[d] = d;
    regimes_.resize(1);
    regimes_[0].mix = sample_regime_mixture(cell_stats(all_days));
}

std::vector<int> Sampler::regime_days(int r) const {
    std::vector<int> days;
    for (int t = 0; t < phi_.size(); ++t)
        if (phi_[t] == r) days.push_back(t);
    return days;
}

std::vector<GaussStats> Sampler::cell_stats(const std::vector<int>& days) const {
    std::vector<GaussStats> cells(cfg_.q, GaussStats(layout_.dim));
    for (int t : days)
        for (long i = 0; i < z_[t].rows(); ++i)
            cells[labels_[t][i]].add_row(z_[t].row(i));
    return cells;
}

double Sampler::collapsed_marginal(const std::vector<GaussStats>& cells) {
    double lm = 0.0;
    std::vector<long> counts(cells.size());
    for (size_t k = 0; k < cells.size(); ++k) {
        counts[k] = cells[k].n;
        lm += ngw_log_marginal(hyper_, cells[k], graph_, router_);
    }
    return lm + stick_label_log_prior(counts, cfg_.alpha);
}

MixtureComponents Sampler::sample_regime_mixture(const std::vector<GaussStats>& cells) {
    MixtureComponents mix;
    std::vector<long> counts(cells.size());
    for (size_t k = 0; k < cells.size(); ++k) counts[k] = cells[k].n;
    mix.log_pi = sample_stick_log_weights(rng_, counts, cfg_.alpha);
    mix.comps.reserve(cells.size());
    for (const auto& c : cells)
        mix.comps.push_back(sample_component_posterior(rng_, hyper_, graph_, c));
    return mix;
}

void Sampler::refresh_regime(int r) {
    regimes_[r].mix = sample_regime_mixture(cell_stats(regime_days(r)));
}

void Sampler::update_latent() {
    if (latent_static_) return;
    for (int t = 0; t < stream_.n_days(); ++t) {
        const MixtureComponents& mix = regimes_[phi_[t]].mix;
        for (long i = 0; i < z_[t].rows(); ++i)
            refresh_latent_row(rng_, stream_.variables, layout_,
                               stream_.days[t].values.row(i),
                               mix.comps[labels_[t][i]], &z_[t], i);
    }
}

void Sampler::update_labels() {
    if (cfg_.q == 1) return;
    // full conditional pass day by day
    for (int t = 0; t < stream_.n_days(); ++t)
        gibbs_labels(rng_, z_[t], regimes_[phi_[t]].mix, &labels_[t]);

    // metropolized split/merge per regime on the pooled rows
    const int m = n_regimes();
    for (int r = 0; r < m; ++r) {
        std::vector<int> days = regime_days(r);
        long rows = 0;
        for (int t : days) rows += z_[t].rows();
        if (rows < 2) continue;
        MatrixXd pooled(rows, layout_.dim);
        VectorXi pooled_labels(rows);
        long at = 0;
        for (int t : days) {
            pooled.middleRows(at, z_[t].rows()) = z_[t];
            pooled_labels.segment(at, z_[t].rows()) = labels_[t];
            at += z_[t].rows();
        }
        SplitMergeResult res = split_merge_labels(rng_, pooled, regimes_[r].mix,
                                                  &pooled_labels, cfg_.n_restricted);
        counters_.label_sm_attempt += res.attempted ? 1 : 0;
        counters_.label_sm_accept += res.accepted ? 1 : 0;
        if (res.accepted) {
            at = 0;
            for (int t : days) {
                labels_[t] = pooled_labels.segment(at, z_[t].rows());
                at += z_[t].rows();
            }
        }
    }
}

void Sampler::update_transitions() {
    if (cfg_.fix_transition_prob) {
        stay_prob_.setConstant(cfg_.fixed_stay_prob);
        return;
    }
    std::vector<long> stays, exits;
    count_transitions(phi_, &stays, &exits);
    const int m = n_regimes();
    for (int r = 0; r < r_cap_; ++r) {
        double a = trans_w_, b = trans_v_;
        if (r < m) {
            a += static_cast<double>(stays[r]);
            b += static_cast<double>(exits[r]);
        }
        stay_prob_[r] = rng_.beta(a, b);
    }
}

void Sampler::update_wv() {
    if (cfg_.fix_transition_prob || !cfg_.update_wv) return;
    ++counters_.wv_attempt;
    if (wv_mh_step(rng_, stay_prob_, &trans_w_, &trans_v_, cfg_.wv_step,
                   cfg_.wv_prior_shape, cfg_.wv_prior_rate))
        ++counters_.wv_accept;
}

void Sampler::update_hypers() {
    if (!cfg_.update_mean_hyper) return;
    std::vector<const ComponentParams*> comps;
    for (const auto& reg : regimes_)
        for (const auto& c : reg.mix.comps) comps.push_back(&c);
    hyper_.m = sample_mean_hyper(rng_, comps, hyper_.lambda);
    hyper_.lambda = sample_lambda_hyper(rng_, comps, hyper_.m, cfg_.lambda_a0,
                                        cfg_.lambda_b0);
}

void Sampler::refresh_components() {
    for (size_t r = 0; r < regimes_.size(); ++r) refresh_regime(static_cast<int>(r));
}

void Sampler::sweep() {
    update_latent();
    update_labels();
    update_transitions();
    update_wv();
    update_hypers();
    phi_merge_split();
    phi_swap();
    refresh_components();
    update_graph();
}

ChainResult Sampler::run(const std::string& out_dir) {
    auto t0 = std::chrono::steady_clock::now();
    const int t = stream_.n_days();
    ChainResult res;
    res.n_sweeps = cfg_.n_sweeps;
    res.burn_in = cfg_.burn_in;
    res.change_prob = VectorXd::Zero(std::max(t - 1, 0));
    res.regime_trace.reserve(cfg_.n_sweeps);

    std::vector<VectorXi> phi_trace;
    const bool keep_trace = cfg_.save_phi_trace && !out_dir.empty();
    if (keep_trace) phi_trace.reserve(cfg_.n_sweeps);

    std::unordered_map<std::string, long> phi_counts;
    long n_post = 0;

    for (int s = 0; s < cfg_.n_sweeps; ++s) {
        sweep();
        res.regime_trace.push_back(n_regimes());
        if (keep_trace) phi_trace.push_back(phi_);
        if (s < cfg_.burn_in) continue;
        ++n_post;
        for (int i = 0; i + 1 < t; ++i)
            if (phi_[i + 1] != phi_[i]) res.change_prob[i] += 1.0;
        std::string key(reinterpret_cast<const char*>(phi_.data()),
                        sizeof(int) * phi_.size());
        ++phi_counts[key];
        if ((s - cfg_.burn_in) % cfg_.snapshot_every == 0 && n_regimes() >= 2) {
            MixtureSnapshot snap;
            const int m = n_regimes();
            snap.before = regimes_[m - 2].mix;
            snap.after = regimes_[m - 1].mix;
            for (int d = 0; d < t; ++d)
                if (phi_[d] == m - 1) {
                    snap.boundary_day = d + 1;
                    break;
                }
            snap.sweep = s;
            res.snapshots.push_back(std::move(snap));
        }
    }
    if (n_post > 0) res.change_prob /= static_cast<double>(n_post);
    for (int i = 0; i + 1 < t; ++i)
        if (res.change_prob[i] >= cfg_.cutoff) res.changepoints.push_back(i + 2);

    res.map_phi = phi_;
    long best = -1;
    for (const auto& [key, count] : phi_counts)
        if (count > best) {
            best = count;
            res.map_phi = Eigen::Map<const VectorXi>(
                reinterpret_cast<const int*>(key.data()), t);
        }

    res.counters = counters_;
    res.nc_counters = router_.counters();
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out_dir.empty()) write_chain_outputs(out_dir, *this, res, phi_trace, stream_);
    return res;
}

}  // namespace dw
