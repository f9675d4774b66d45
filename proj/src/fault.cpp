#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "driftwatch/fault.hpp"
#include "json.hpp"

namespace dw {

MomentComponent make_moment_component(VectorXd mu, MatrixXd sigma) {
    MomentComponent c;
    c.mu = std::move(mu);
    c.sigma = 0.5 * (sigma + sigma.transpose());
    Eigen::LLT<MatrixXd> llt(c.sigma);
    if (llt.info() != Eigen::Success)
        throw error("component covariance is not positive definite");
    c.chol_lower = llt.matrixL();
    const long j = c.sigma.rows();
    c.lambda = llt.solve(MatrixXd::Identity(j, j));
    c.lambda = 0.5 * (c.lambda + c.lambda.transpose());
    c.logdet_lambda = -logdet_spd(c.sigma);
    return c;
}

MomentMixture to_moments(const MixtureComponents& mix) {
    MomentMixture out;
    out.log_pi = mix.log_pi;
    for (const auto& comp : mix.comps) {
        Eigen::LLT<MatrixXd> llt(comp.lambda);
        if (llt.info() != Eigen::Success)
            throw error("component precision is not positive definite");
        const long j = comp.lambda.rows();
        MatrixXd sigma = llt.solve(MatrixXd::Identity(j, j));
        out.comps.push_back(make_moment_component(comp.mu, std::move(sigma)));
    }
    return out;
}

MomentMixture marginal_mixture(const MomentMixture& mix, const std::vector<int>& keep) {
    MomentMixture out;
    out.log_pi = mix.log_pi;
    const int k = static_cast<int>(keep.size());
    for (const auto& c : mix.comps) {
        VectorXd mu(k);
        MatrixXd sigma(k, k);
        for (int r = 0; r < k; ++r) {
            mu[r] = c.mu[keep[r]];
            for (int s = 0; s < k; ++s) sigma(r, s) = c.sigma(keep[r], keep[s]);
        }
        out.comps.push_back(make_moment_component(std::move(mu), std::move(sigma)));
    }
    return out;
}

double mixture_logpdf(const MomentMixture& mix, const VectorXd& x) {
    const double j = static_cast<double>(x.size());
    std::vector<double> terms;
    terms.reserve(mix.comps.size());
    for (size_t k = 0; k < mix.comps.size(); ++k) {
        const MomentComponent& c = mix.comps[k];
        VectorXd dev = x - c.mu;
        terms.push_back(mix.log_pi[k] - 0.5 * j * std::log(2.0 * M_PI) +
                        0.5 * c.logdet_lambda - 0.5 * dev.dot(c.lambda * dev));
    }
    return logsumexp(terms);
}

double hellinger_gauss(const MomentComponent& a, const MomentComponent& b) {
    MatrixXd mid = 0.5 * (a.sigma + b.sigma);
    Eigen::LLT<MatrixXd> llt(mid);
    if (llt.info() != Eigen::Success)
        throw error("averaged covariance is not positive definite");
    double logdet_mid = 0.0;
    MatrixXd l = llt.matrixL();
    for (long i = 0; i < mid.rows(); ++i) logdet_mid += 2.0 * std::log(l(i, i));
    VectorXd dev = a.mu - b.mu;
    const double quad = dev.dot(llt.solve(dev));
    // log overlap integral; logdet(sigma) = -logdet(lambda)
    const double log_aff = 0.25 * (-a.logdet_lambda) + 0.25 * (-b.logdet_lambda) -
                           0.5 * logdet_mid - 0.125 * quad;
    const double aff = std::exp(log_aff);
    return std::sqrt(std::max(0.0, 1.0 - aff));
}

HellingerEstimate hellinger_mixture(Rng& rng, const MomentMixture& a,
                                    const MomentMixture& b, int n_samples) {
    HellingerEstimate out;
    if (a.dim() != b.dim()) throw error("mixture dimensions differ");
    if (a.comps.size() == 1 && b.comps.size() == 1) {
        out.h = hellinger_gauss(a.comps[0], b.comps[0]);
        out.affinity = 1.0 - sq(out.h);
        return out;
    }
    if (n_samples < 2) throw error("mixture Hellinger needs at least two samples");

    auto draw = [&](const MomentMixture& mix) {
        // component by weight, then a multivariate normal push through
        const double u = rng.uniform();
        double acc = 0.0;
        size_t k = mix.comps.size() - 1;
        for (size_t i = 0; i < mix.comps.size(); ++i) {
            acc += std::exp(mix.log_pi[i]);
            if (u <= acc) {
                k = i;
                break;
            }
        }
        const MomentComponent& c = mix.comps[k];
        VectorXd xi(c.mu.size());
        for (long i = 0; i < xi.size(); ++i) xi[i] = rng.normal();
        return VectorXd(c.mu + c.chol_lower * xi);
    };

    const double log_half = std::log(0.5);
    double sum = 0.0, sumsq = 0.0;
    for (int it = 0; it < n_samples; ++it) {
        VectorXd x = rng.uniform() < 0.5 ? draw(a) : draw(b);
        const double la = mixture_logpdf(a, x);
        const double lb = mixture_logpdf(b, x);
        // sqrt(f_a f_b) over the balanced average of the two densities
        const double ratio =
            std::exp(0.5 * (la + lb) - (log_half + logsumexp({la, lb})));
        sum += ratio;
        sumsq += sq(ratio);
    }
    out.n_samples = n_samples;
    out.affinity = sum / n_samples;
    const double var = std::max(0.0, sumsq / n_samples - sq(out.affinity));
    out.affinity_se = std::sqrt(var / n_samples);
    out.h = std::sqrt(std::max(0.0, 1.0 - out.affinity));
    return out;
}

FaultReport fault_report(const std::vector<MixtureSnapshot>& snaps,
                         const std::vector<VariableSpec>& vars,
                         const LatentLayout& layout, const FaultConfig& cfg) {
    if (snaps.empty()) throw error("fault analysis needs at least one snapshot");
    if (layout.blocks.size() != vars.size())
        throw error("layout does not match the variable list");

    FaultReport rep;
    rep.n_snapshots = static_cast<int>(snaps.size());
    rep.per_variable.resize(vars.size());
    for (size_t v = 0; v < vars.size(); ++v) rep.per_variable[v].name = vars[v].name;
    rep.snapshot_h = VectorXd::Zero(rep.n_snapshots);
    rep.snapshot_isolated = MatrixXd::Zero(rep.n_snapshots, vars.size());
    rep.snapshot_dropped = MatrixXd::Zero(rep.n_snapshots, vars.size());

    Rng rng(mix_seed(cfg.seed, 0x6661756c74ULL));
    const int dim = layout.dim;

    for (size_t s = 0; s < snaps.size(); ++s) {
        const MixtureSnapshot& snap = snaps[s];
        rep.snapshot_sweeps.push_back(snap.sweep);
        rep.snapshot_days.push_back(snap.boundary_day);
        MomentMixture before = to_moments(snap.before);
        MomentMixture after = to_moments(snap.after);
        if (before.dim() != dim)
            throw error("snapshot dimension does not match the layout");

        HellingerEstimate full = hellinger_mixture(rng, before, after, cfg.n_mc);
        rep.snapshot_h[s] = full.h;
        rep.h += full.h;
        rep.h_se += full.affinity_se;
        if (full.h < 1e-12) continue;  // nothing to attribute for this snapshot

        for (size_t v = 0; v < vars.size(); ++v) {
            const LatentBlock& blk = layout.blocks[v];
            std::vector<int> own, rest;
            for (int j = 0; j < dim; ++j) {
                if (j >= blk.offset && j < blk.offset + blk.width)
                    own.push_back(j);
                else
                    rest.push_back(j);
            }
            HellingerEstimate only = hellinger_mixture(
                rng, marginal_mixture(before, own), marginal_mixture(after, own),
                cfg.n_mc);
            rep.snapshot_isolated(s, v) = only.h / full.h;
            if (!rest.empty()) {
                HellingerEstimate without = hellinger_mixture(
                    rng, marginal_mixture(before, rest), marginal_mixture(after, rest),
                    cfg.n_mc);
                rep.snapshot_dropped(s, v) = 1.0 - without.h / full.h;
            } else {
                rep.snapshot_dropped(s, v) = 1.0;
            }
        }
    }

    const double n = static_cast<double>(rep.n_snapshots);
    rep.h /= n;
    rep.h_se /= n;
    for (size_t v = 0; v < vars.size(); ++v) {
        rep.per_variable[v].isolated = rep.snapshot_isolated.col(v).sum() / n;
        rep.per_variable[v].dropped = rep.snapshot_dropped.col(v).sum() / n;
    }

    rep.ranking.resize(vars.size());
    std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
    rep.ranking_dropped = rep.ranking;
    std::stable_sort(rep.ranking.begin(), rep.ranking.end(), [&](int x, int y) {
        return rep.per_variable[x].isolated > rep.per_variable[y].isolated;
    });
    std::stable_sort(rep.ranking_dropped.begin(), rep.ranking_dropped.end(),
                     [&](int x, int y) {
                         return rep.per_variable[x].dropped > rep.per_variable[y].dropped;
                     });
    return rep;
}

void write_fault_outputs(const std::string& out_dir, const FaultReport& report) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    {
        nlohmann::json vars = nlohmann::json::array();
        for (const auto& pv : report.per_variable)
            vars.push_back({{"name", pv.name},
                            {"isolated_share", pv.isolated},
                            {"dropped_loss", pv.dropped}});
        nlohmann::json ranking = nlohmann::json::array();
        for (int idx : report.ranking) ranking.push_back(report.per_variable[idx].name);
        nlohmann::json ranking_dropped = nlohmann::json::array();
        for (int idx : report.ranking_dropped)
            ranking_dropped.push_back(report.per_variable[idx].name);
        nlohmann::json j = {{"hellinger", report.h},
                            {"hellinger_se", report.h_se},
                            {"n_snapshots", report.n_snapshots},
                            {"variables", vars},
                            {"ranking", ranking},
                            {"ranking_by_dropped_loss", ranking_dropped}};
        std::ofstream f(dir / "fault_report.json");
        if (!f) throw error("cannot write fault_report.json");
        f << std::setprecision(17) << j.dump(2) << "\n";
    }
    {
        // long-form table: one row per (snapshot, variable)
        std::ofstream f(dir / "fault_losses.csv");
        if (!f) throw error("cannot write fault_losses.csv");
        f << std::setprecision(17);
        f << "snapshot,sweep,boundary_day,variable,hellinger,isolated_share,"
             "dropped_loss\n";
        for (int s = 0; s < report.n_snapshots; ++s)
            for (size_t v = 0; v < report.per_variable.size(); ++v)
                f << s << "," << report.snapshot_sweeps[s] << ","
                  << report.snapshot_days[s] << "," << report.per_variable[v].name
                  << "," << report.snapshot_h[s] << ","
                  << report.snapshot_isolated(s, v) << ","
                  << report.snapshot_dropped(s, v) << "\n";
    }
}

}  // namespace dw
