#include <algorithm>
#include <cmath>
#include <set>

#include "driftwatch/sampler.hpp"

namespace dw {

double log_phi_prior(const VectorXi& phi, const VectorXd& stay_prob) {
    if (phi.size() == 0 || phi[0] != 0) return -kInf;
    double lp = 0.0;
    for (long t = 0; t + 1 < phi.size(); ++t) {
        const int cur = phi[t], nxt = phi[t + 1];
        if (cur < 0 || cur >= stay_prob.size()) return -kInf;
        if (nxt == cur)
            lp += std::log(stay_prob[cur]);
        else if (nxt == cur + 1)
            lp += std::log1p(-stay_prob[cur]);
        else
            return -kInf;
    }
    return lp;
}

void count_transitions(const VectorXi& phi, std::vector<long>* stays,
                       std::vector<long>* exits) {
    const int m = phi.size() > 0 ? phi[phi.size() - 1] + 1 : 0;
    stays->assign(m, 0);
    exits->assign(m, 0);
    for (long t = 0; t + 1 < phi.size(); ++t) {
        if (phi[t + 1] == phi[t])
            ++(*stays)[phi[t]];
        else
            ++(*exits)[phi[t]];
    }
}

double stick_label_log_prior(const std::vector<long>& counts, double alpha) {
    const int q = static_cast<int>(counts.size());
    if (q <= 1) return 0.0;
    long tail = 0;
    for (long c : counts) tail += c;
    const double lbeta_prior = -std::log(alpha);  // log B(1, alpha)
    double lp = 0.0;
    for (int k = 0; k + 1 < q; ++k) {
        tail -= counts[k];
        const double a = 1.0 + static_cast<double>(counts[k]);
        const double b = alpha + static_cast<double>(tail);
        lp += std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b) - lbeta_prior;
    }
    return lp;
}

bool wv_mh_step(Rng& rng, const VectorXd& stay_probs, double* w, double* v,
                double step, double prior_shape, double prior_rate) {
    auto log_post = [&](double a, double b) {
        double lp = (prior_shape - 1.0) * (std::log(a) + std::log(b)) -
                    prior_rate * (a + b);
        const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
        for (long i = 0; i < stay_probs.size(); ++i)
            lp += (a - 1.0) * std::log(stay_probs[i]) +
                  (b - 1.0) * std::log1p(-stay_probs[i]) - lbeta;
        return lp;
    };
    const double w2 = *w * std::exp(step * rng.normal());
    const double v2 = *v * std::exp(step * rng.normal());
    // log-scale random walk needs the Jacobian ratio w2 v2 / (w v)
    const double la = log_post(w2, v2) - log_post(*w, *v) + std::log(w2 / *w) +
                      std::log(v2 / *v);
    if (std::log(rng.uniform()) < la) {
        *w = w2;
        *v = v2;
        return true;
    }
    return false;
}

void refresh_latent_row(Rng& rng, const std::vector<VariableSpec>& vars,
                        const LatentLayout& layout,
                        const Eigen::Ref<const Eigen::RowVectorXd>& obs,
                        const ComponentParams& comp, MatrixXd* z, long i) {
    const MatrixXd& lam = comp.lambda;
    const VectorXd& mu = comp.mu;

    std::vector<int> free_idx;
    struct ScalarConstraint {
        int j;
        double lo, hi;
    };
    std::vector<ScalarConstraint> scalars;
    struct NominalConstraint {
        int offset, width, level;
    };
    std::vector<NominalConstraint> nominals;

    for (const auto& b : layout.blocks) {
        const VariableSpec& v = vars[b.var];
        const double y = obs[b.var];
        if (is_missing(y)) {
            for (int k = 0; k < b.width; ++k) free_idx.push_back(b.offset + k);
            continue;
        }
        switch (v.kind) {
            case VariableKind::continuous:
                if (std::isfinite(v.lower) && y <= v.lower)
                    scalars.push_back({b.offset, -kInf, v.lower});
                else if (std::isfinite(v.upper) && y >= v.upper)
                    scalars.push_back({b.offset, v.upper, kInf});
                else
                    (*z)(i, b.offset) = y;  // pinned to the recorded value
                break;
            case VariableKind::binary:
            case VariableKind::ordinal: {
                double lo, hi;
                latent_interval(v, y, &lo, &hi);
                scalars.push_back({b.offset, lo, hi});
                break;
            }
            case VariableKind::nominal:
                nominals.push_back({b.offset, b.width, static_cast<int>(y)});
                break;
        }
    }
    if (free_idx.empty() && scalars.empty() && nominals.empty()) return;

    VectorXd zrow = z->row(i).transpose();

    if (!free_idx.empty()) {
        // joint conditional draw of the unconstrained block
        const int f = static_cast<int>(free_idx.size());
        MatrixXd lff(f, f);
        for (int r = 0; r < f; ++r)
            for (int c = 0; c < f; ++c) lff(r, c) = lam(free_idx[r], free_idx[c]);
        VectorXd dev = zrow - mu;
        VectorXd lamdev = lam * dev;
        VectorXd dev_f(f), w_f(f);
        for (int r = 0; r < f; ++r) {
            dev_f[r] = dev[free_idx[r]];
            w_f[r] = lamdev[free_idx[r]];
        }
        w_f -= lff * dev_f;  // coupling to the conditioned coordinates
        Eigen::LLT<MatrixXd> llt(lff);
        if (llt.info() != Eigen::Success)
            throw error("latent conditional precision is not positive definite");
        VectorXd shift = llt.solve(w_f);
        VectorXd xi(f);
        for (int r = 0; r < f; ++r) xi[r] = rng.normal();
        VectorXd noise = llt.matrixU().solve(xi);
        for (int r = 0; r < f; ++r)
            zrow[free_idx[r]] = mu[free_idx[r]] - shift[r] + noise[r];
    }

    if (!scalars.empty() || !nominals.empty()) {
        VectorXd resid = lam * (zrow - mu);
        auto draw_coord = [&](int jc, double lo, double hi) {
            const double ljj = lam(jc, jc);
            const double mean = zrow[jc] - resid[jc] / ljj;
            const double sd = 1.0 / std::sqrt(ljj);
            const double znew = rng.trunc_normal(mean, sd, lo, hi);
            const double delta = znew - zrow[jc];
            if (delta != 0.0) {
                resid += lam.col(jc) * delta;
                zrow[jc] = znew;
            }
        };
        for (const auto& c : scalars) draw_coord(c.j, c.lo, c.hi);
        for (const auto& nm : nominals) {
            const int jstar = nm.offset + nm.level;
            for (int k = 0; k < nm.width; ++k) {
                const int jc = nm.offset + k;
                if (jc == jstar) {
                    double lo = -kInf;
                    for (int k2 = 0; k2 < nm.width; ++k2)
                        if (k2 != nm.level) lo = std::max(lo, zrow[nm.offset + k2]);
                    draw_coord(jc, lo, kInf);
                } else {
                    draw_coord(jc, -kInf, zrow[jstar]);
                }
            }
        }
    }
    z->row(i) = zrow.transpose();
}

namespace {

GaussStats stats_minus(const GaussStats& total, const GaussStats& part) {
    GaussStats out(static_cast<int>(total.sum.size()));
    out.n = total.n - part.n;
    out.sum = total.sum - part.sum;
    out.sqsum = total.sqsum - part.sqsum;
    return out;
}

// sum of Gaussian log densities of the summarized rows
double loglik_from_stats(const GaussStats& s, const ComponentParams& p) {
    if (s.n == 0) return 0.0;
    const double j = static_cast<double>(p.mu.size());
    const double quad = (p.lambda.cwiseProduct(s.sqsum)).sum() -
                        2.0 * p.mu.dot(p.lambda * s.sum) +
                        static_cast<double>(s.n) * p.mu.dot(p.lambda * p.mu);
    return -0.5 * s.n * j * std::log(2.0 * M_PI) + 0.5 * s.n * p.logdet - 0.5 * quad;
}

}  // namespace

SplitPointDist split_point_distribution(Rng& rng,
                                        const std::vector<const MatrixXd*>& day_rows,
                                        const NGWHyper& prior, const Graph& g) {
    const int nd = static_cast<int>(day_rows.size());
    if (nd < 2) throw error("split-point distribution needs at least two days");
    const int nb = nd - 1;
    SplitPointDist out;
    if (nb == 1) {
        out.probs = VectorXd::Ones(1);
        out.anchors = {1};
        return out;
    }
    const int j = static_cast<int>(day_rows[0]->cols());

    std::vector<GaussStats> prefix(nd + 1, GaussStats(j));
    for (int t = 0; t < nd; ++t) {
        prefix[t + 1] = prefix[t];
        prefix[t + 1].add_rows(*day_rows[t]);
    }
    const GaussStats& total = prefix[nd];

    std::set<int> anchors;
    if (nb <= 12) {
        for (int s = 1; s <= nb; ++s) anchors.insert(s);
    } else {
        anchors.insert(1);
        anchors.insert(nb);
        const int kt = nd / 10;
        for (int s = 10; s <= nb; s += 10) anchors.insert(s);
        // one uniformly placed probe per later block of ten
        for (int blk = 2; blk <= kt; ++blk) {
            const int lo = 10 * (blk - 1) + 1;
            const int hi = std::min(10 * blk, nb);
            if (lo <= hi) anchors.insert(lo + static_cast<int>(rng.uniform_int(hi - lo + 1)));
        }
    }
    out.anchors.assign(anchors.begin(), anchors.end());

    std::vector<double> vals(out.anchors.size());
    for (size_t a = 0; a < out.anchors.size(); ++a) {
        const int s = out.anchors[a];
        const GaussStats& left = prefix[s];
        GaussStats right = stats_minus(total, left);
        ComponentParams th_l = sample_component_posterior(rng, prior, g, left);
        ComponentParams th_r = sample_component_posterior(rng, prior, g, right);
        vals[a] = loglik_from_stats(left, th_l) + loglik_from_stats(right, th_r);
    }

    // linear interpolation between evaluated boundaries on the log scale
    VectorXd logv(nb);
    for (size_t a = 0; a + 1 < out.anchors.size(); ++a) {
        const int s0 = out.anchors[a], s1 = out.anchors[a + 1];
        for (int s = s0; s <= s1; ++s) {
            const double frac = s1 == s0 ? 0.0 : double(s - s0) / double(s1 - s0);
            logv[s - 1] = vals[a] + frac * (vals[a + 1] - vals[a]);
        }
    }
    const double shift = logv.maxCoeff();
    out.probs = (logv.array() - shift).exp();
    out.probs /= out.probs.sum();
    return out;
}

DrjProposal drj_edge_proposal(Rng& rng, const Graph& g, int a, int b, bool add,
                              double nu, const MatrixXd& d,
                              const std::vector<const MatrixXd*>& cell_lambda,
                              const std::vector<const MatrixXd*>& cell_dpost,
                              double sigma_g) {
    if (a > b) std::swap(a, b);
    if (a == b || b >= g.size()) throw error("edge endpoints out of range");
    if (g.edge(a, b) == add) throw error("edge flip direction disagrees with the graph");
    if (cell_lambda.size() != cell_dpost.size())
        throw error("cell precision/posterior-scale lists differ in length");

    Graph g2 = g;
    g2.flip_edge(a, b);
    const double s2 = 2.0 * sigma_g * sigma_g;

    DrjProposal out;
    out.valid = true;
    out.log_alpha = 0.0;
    out.new_lambda.reserve(cell_lambda.size());

    auto symmetrize = [](MatrixXd m) {
        return MatrixXd(0.5 * (m + m.transpose()));
    };

    for (size_t c = 0; c < cell_lambda.size(); ++c) {
        const MatrixXd& lam = *cell_lambda[c];
        const MatrixXd& dp = *cell_dpost[c];
        MatrixXd psi = chol_upper(lam);

        if (add) {
            const double xi = rng.normal();
            MatrixXd psit = psi;
            psit(a, b) += sigma_g * xi;
            psit = complete_cholesky(psit, g2);
            MatrixXd lamt = symmetrize(psit.transpose() * psit);

            MatrixXd lhat = sample_gwishart(rng, g2, nu, d);
            MatrixXd psih = chol_upper(lhat);
            MatrixXd psih_g = complete_cholesky(psih, g);
            MatrixXd lhat_g = symmetrize(psih_g.transpose() * psih_g);

            out.log_alpha += std::log(psi(a, a)) - std::log(psih(a, a)) -
                             0.5 * (lamt - lam).cwiseProduct(dp).sum() +
                             0.5 * xi * xi -
                             0.5 * (lhat_g - lhat).cwiseProduct(d).sum() -
                             sq(psih(a, b) - psih_g(a, b)) / s2;
            out.new_lambda.push_back(std::move(lamt));
        } else {
            MatrixXd psit = complete_cholesky(psi, g2);
            MatrixXd lamt = symmetrize(psit.transpose() * psit);

            MatrixXd lhat = sample_gwishart(rng, g2, nu, d);
            MatrixXd psih = chol_upper(lhat);
            const double xih = rng.normal();
            MatrixXd psih_b = psih;
            psih_b(a, b) += sigma_g * xih;
            psih_b = complete_cholesky(psih_b, g);
            MatrixXd lhat_b = symmetrize(psih_b.transpose() * psih_b);

            out.log_alpha += -std::log(psi(a, a)) + std::log(psih(a, a)) -
                             0.5 * (lamt - lam).cwiseProduct(dp).sum() -
                             sq(psi(a, b) - psit(a, b)) / s2 -
                             0.5 * (lhat_b - lhat).cwiseProduct(d).sum() +
                             0.5 * xih * xih;
            out.new_lambda.push_back(std::move(lamt));
        }
    }
    return out;
}

void Sampler::phi_merge_split() {
    const int t = stream_.n_days();
    if (t < 2) return;
    const int m = n_regimes();
    const bool can_merge = m > 1;
    const bool can_split = m < t && m < r_cap_;
    if (!can_merge && !can_split) return;

    bool do_split;
    double lq_type_fwd;
    if (!can_merge) {
        do_split = true;
        lq_type_fwd = 0.0;
    } else if (!can_split) {
        do_split = false;
        lq_type_fwd = 0.0;
    } else {
        do_split = rng_.uniform() < 0.5;
        lq_type_fwd = std::log(0.5);
    }

    if (do_split) {
        ++counters_.phi_split_attempt;
        const int r = static_cast<int>(rng_.uniform_int(m));
        std::vector<int> days = regime_days(r);
        const int nd = static_cast<int>(days.size());
        if (nd < 2) return;  // one-day regimes cannot split

        std::vector<const MatrixXd*> mats;
        for (int d : days) mats.push_back(&z_[d]);
        SplitPointDist spd = split_point_distribution(rng_, mats, hyper_, graph_);
        double u = rng_.uniform(), acc = 0.0;
        int s = nd - 1;
        for (int c = 1; c < nd; ++c) {
            acc += spd.probs[c - 1];
            if (u <= acc) {
                s = c;
                break;
            }
        }

        std::vector<int> days_l(days.begin(), days.begin() + s);
        std::vector<int> days_r(days.begin() + s, days.end());
        auto cells_l = cell_stats(days_l);
        auto cells_r = cell_stats(days_r);
        auto cells_all = cell_stats(days);
        const double lm = collapsed_marginal(cells_l) + collapsed_marginal(cells_r) -
                          collapsed_marginal(cells_all);

        VectorXi phi2 = phi_;
        const int first_r = days_r.front();
        for (int dd = 0; dd < t; ++dd)
            if (phi_[dd] > r || (phi_[dd] == r && dd >= first_r)) ++phi2[dd];

        const double dprior =
            log_phi_prior(phi2, stay_prob_) - log_phi_prior(phi_, stay_prob_);
        const int m2 = m + 1;
        const bool can_split_rev = m2 < t && m2 < r_cap_;
        const double lq_type_rev = can_split_rev ? std::log(0.5) : 0.0;

        const double la = lm + dprior + lq_type_rev - lq_type_fwd -
                          std::log(spd.probs[s - 1]);
        if (std::log(rng_.uniform()) < la) {
            ++counters_.phi_split_accept;
            phi_ = phi2;
            RegimeMixture right;
            right.mix = sample_regime_mixture(cells_r);
            regimes_[r].mix = sample_regime_mixture(cells_l);
            regimes_.insert(regimes_.begin() + r + 1, std::move(right));
        }
        return;
    }

    ++counters_.phi_merge_attempt;
    const int bnd = static_cast<int>(rng_.uniform_int(m - 1));  // merge bnd, bnd+1
    std::vector<int> days_a = regime_days(bnd);
    std::vector<int> days_b = regime_days(bnd + 1);
    std::vector<int> days = days_a;
    days.insert(days.end(), days_b.begin(), days_b.end());

    auto cells_a = cell_stats(days_a);
    auto cells_b = cell_stats(days_b);
    auto cells_all = cell_stats(days);
    const double lm = collapsed_marginal(cells_all) - collapsed_marginal(cells_a) -
                      collapsed_marginal(cells_b);

    VectorXi phi2 = phi_;
    for (int dd = 0; dd < t; ++dd)
        if (phi_[dd] > bnd) --phi2[dd];

    std::vector<const MatrixXd*> mats;
    for (int d : days) mats.push_back(&z_[d]);
    SplitPointDist spd = split_point_distribution(rng_, mats, hyper_, graph_);
    const int s_rev = static_cast<int>(days_a.size());

    const double dprior = log_phi_prior(phi2, stay_prob_) - log_phi_prior(phi_, stay_prob_);
    const int m2 = m - 1;
    const double lq_type_rev = m2 > 1 ? std::log(0.5) : 0.0;

    const double la = lm + dprior + lq_type_rev - lq_type_fwd +
                      std::log(spd.probs[s_rev - 1]);
    if (std::log(rng_.uniform()) < la) {
        ++counters_.phi_merge_accept;
        phi_ = phi2;
        regimes_[bnd].mix = sample_regime_mixture(cells_all);
        regimes_.erase(regimes_.begin() + bnd + 1);
    }
}

void Sampler::phi_swap() {
    const int t = stream_.n_days();
    for (int i = 1; i + 1 < t; ++i) {
        const int rl = phi_[i - 1], rr = phi_[i + 1];
        if (rl + 1 != rr) continue;
        // exact conditional of this day's regime side, labels marginalized
        const double lw_l = std::log(stay_prob_[rl]) + std::log1p(-stay_prob_[rl]) +
                            mixture_loglik_rows(z_[i], regimes_[rl].mix);
        const double lw_r = std::log1p(-stay_prob_[rl]) + std::log(stay_prob_[rr]) +
                            mixture_loglik_rows(z_[i], regimes_[rr].mix);
        const double p_right = 1.0 / (1.0 + std::exp(lw_l - lw_r));
        const int pick = rng_.uniform() < p_right ? rr : rl;
        if (pick != phi_[i]) {
            phi_[i] = pick;
            gibbs_labels(rng_, z_[i], regimes_[pick].mix, &labels_[i]);
            ++counters_.phi_swap_flips;
        }
    }
}

void Sampler::update_graph() {
    if (!cfg_.update_graph || cfg_.graph_mode == GraphMode::full) return;
    if (layout_.dim < 2) return;

    struct Cell {
        int r, k;
        GaussStats stats;
    };
    std::vector<Cell> occupied;
    std::vector<std::vector<bool>> is_occ(regimes_.size(),
                                          std::vector<bool>(cfg_.q, false));
    for (size_t r = 0; r < regimes_.size(); ++r) {
        auto cells = cell_stats(regime_days(static_cast<int>(r)));
        for (int k = 0; k < cfg_.q; ++k)
            if (cells[k].n > 0) {
                occupied.push_back({static_cast<int>(r), k, cells[k]});
                is_occ[r][k] = true;
            }
    }

    const double edge_lodds =
        std::log(cfg_.edge_prior) - std::log1p(-cfg_.edge_prior);

    for (int flip = 0; flip < cfg_.graph_flips_per_sweep; ++flip) {
        ++counters_.graph_attempt;
        auto [a, b] = propose_edge(rng_, layout_.dim);
        const bool add = !graph_.edge(a, b);
        if (cfg_.graph_mode == GraphMode::decomposable) {
            Graph g2 = graph_;
            g2.flip_edge(a, b);
            if (!is_chordal(g2)) continue;
        }

        std::vector<const MatrixXd*> lams;
        std::vector<MatrixXd> dposts;
        dposts.reserve(occupied.size());
        for (const auto& c : occupied) {
            const ComponentParams& p = regimes_[c.r].mix.comps[c.k];
            VectorXd devm = p.mu - hyper_.m;
            MatrixXd u = c.stats.sqsum - p.mu * c.stats.sum.transpose() -
                         c.stats.sum * p.mu.transpose() +
                         static_cast<double>(c.stats.n) * p.mu * p.mu.transpose() +
                         hyper_.lambda * devm * devm.transpose();
            dposts.push_back(hyper_.d + 0.5 * (u + u.transpose()));
        }
        std::vector<const MatrixXd*> dpost_ptrs;
        for (const auto& dpm : dposts) dpost_ptrs.push_back(&dpm);
        for (const auto& c : occupied) lams.push_back(&regimes_[c.r].mix.comps[c.k].lambda);

        DrjProposal prop = drj_edge_proposal(rng_, graph_, a, b, add, hyper_.nu,
                                             hyper_.d, lams, dpost_ptrs, cfg_.sigma_g);
        if (!prop.valid) continue;
        const double la = prop.log_alpha + (add ? edge_lodds : -edge_lodds);
        if (std::log(rng_.uniform()) >= la) continue;

        ++counters_.graph_accept;
        graph_.flip_edge(a, b);
        for (size_t c = 0; c < occupied.size(); ++c) {
            const Cell& cell = occupied[c];
            ComponentParams np;
            np.lambda = prop.new_lambda[c];
            np.logdet = logdet_spd(np.lambda);
            // conjugate location polish under the new precision
            const double lam_n = hyper_.lambda + static_cast<double>(cell.stats.n);
            VectorXd mpost = (hyper_.lambda * hyper_.m + cell.stats.sum) / lam_n;
            Eigen::LLT<MatrixXd> llt(np.lambda);
            if (llt.info() != Eigen::Success)
                throw error("updated precision is not positive definite");
            VectorXd xi(layout_.dim);
            for (int d2 = 0; d2 < layout_.dim; ++d2) xi[d2] = rng_.normal();
            np.mu = mpost + llt.matrixU().solve(xi) / std::sqrt(lam_n);
            regimes_[cell.r].mix.comps[cell.k] = std::move(np);
        }
        // unoccupied components move to the new graph by a fresh prior draw
        GaussStats none(layout_.dim);
        for (size_t r = 0; r < regimes_.size(); ++r)
            for (int k = 0; k < cfg_.q; ++k)
                if (!is_occ[r][k])
                    regimes_[r].mix.comps[k] =
                        sample_component_posterior(rng_, hyper_, graph_, none);
    }
}

}  // namespace dw
