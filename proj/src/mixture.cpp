#include "driftwatch/mixture.hpp"

#include <cmath>

namespace dw {

MatrixXd GaussStats::centered_scatter() const {
    if (n == 0) return sqsum;
    VectorXd zbar = mean();
    MatrixXd s = sqsum - double(n) * zbar * zbar.transpose();
    return 0.5 * (s + s.transpose());
}

NGWHyper ngw_posterior(const NGWHyper& prior, const GaussStats& s) {
    if (s.n == 0) return prior;
    const double n = static_cast<double>(s.n);
    NGWHyper post;
    post.lambda = prior.lambda + n;
    post.nu = prior.nu + n;
    VectorXd zbar = s.mean();
    post.m = (prior.lambda * prior.m + s.sum) / post.lambda;
    VectorXd dev = zbar - prior.m;
    MatrixXd d = prior.d + s.centered_scatter() +
                 (prior.lambda * n / post.lambda) * dev * dev.transpose();
    post.d = 0.5 * (d + d.transpose());
    return post;
}

ComponentParams make_component(VectorXd mu, MatrixXd lambda) {
    ComponentParams p;
    p.mu = std::move(mu);
    p.lambda = std::move(lambda);
    p.logdet = logdet_spd(p.lambda);
    return p;
}

ComponentParams sample_component_posterior(Rng& rng, const NGWHyper& prior,
                                           const Graph& g, const GaussStats& stats) {
    NGWHyper post = ngw_posterior(prior, stats);
    MatrixXd lambda = sample_gwishart(rng, g, post.nu, post.d);
    Eigen::LLT<MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success)
        throw error("component precision draw is not positive definite");
    const int j = static_cast<int>(lambda.rows());
    VectorXd xi(j);
    for (int k = 0; k < j; ++k) xi[k] = rng.normal();
    VectorXd mu = post.m +
                  llt.matrixU().solve(xi) / std::sqrt(post.lambda);
    ComponentParams p;
    p.mu = std::move(mu);
    p.lambda = std::move(lambda);
    p.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return p;
}

double component_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& z,
                        const ComponentParams& p) {
    const double j = static_cast<double>(p.mu.size());
    VectorXd dev = z.transpose() - p.mu;
    double quad = dev.dot(p.lambda * dev);
    return -0.5 * j * std::log(2.0 * M_PI) + 0.5 * p.logdet - 0.5 * quad;
}

double ngw_log_marginal(const NGWHyper& prior, const GaussStats& stats,
                        const Graph& g, NormConstRouter& router) {
    if (stats.n == 0) return 0.0;
    if (std::abs(prior.nu - router.nu_prior()) > 1e-9)
        throw error("marginal likelihood prior disagrees with the constant router");
    const double n = static_cast<double>(stats.n);
    const double j = static_cast<double>(prior.m.size());
    NGWHyper post = ngw_posterior(prior, stats);
    return -0.5 * n * j * std::log(2.0 * M_PI) +
           0.5 * j * (std::log(prior.lambda) - std::log(post.lambda)) +
           router.posterior_log_const(g, post.nu, post.d) - router.prior_log_const(g);
}

std::vector<long> label_counts(const VectorXi& labels, int q) {
    std::vector<long> counts(q, 0);
    for (long i = 0; i < labels.size(); ++i) {
        int k = labels[i];
        if (k < 0 || k >= q) throw error("label out of range");
        ++counts[k];
    }
    return counts;
}

VectorXd sample_stick_log_weights(Rng& rng, const std::vector<long>& counts, double alpha) {
    const int q = static_cast<int>(counts.size());
    if (q < 1) throw error("stick-breaking needs at least one component");
    VectorXd log_pi(q);
    long tail = 0;
    for (int k = 0; k < q; ++k) tail += counts[k];
    double log_remaining = 0.0;  // log prod_{l<k} (1 - v_l)
    for (int k = 0; k < q; ++k) {
        tail -= counts[k];
        double v = k + 1 < q
                       ? rng.beta(1.0 + double(counts[k]), alpha + double(tail))
                       : 1.0;
        log_pi[k] = (v >= 1.0 ? 0.0 : std::log(v)) + log_remaining;
        log_remaining += v >= 1.0 ? -kInf : std::log1p(-v);
    }
    return log_pi;
}

double mixture_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& z,
                      const MixtureComponents& mix) {
    std::vector<double> terms(mix.comps.size());
    for (size_t k = 0; k < mix.comps.size(); ++k)
        terms[k] = mix.log_pi[static_cast<long>(k)] + component_loglik(z, mix.comps[k]);
    return logsumexp(terms);
}

double mixture_loglik_rows(const MatrixXd& z, const MixtureComponents& mix) {
    double total = 0.0;
    for (long i = 0; i < z.rows(); ++i) total += mixture_loglik(z.row(i), mix);
    return total;
}

int gibbs_labels(Rng& rng, const MatrixXd& z, const MixtureComponents& mix,
                 VectorXi* labels) {
    const int q = mix.q();
    if (labels->size() != z.rows()) throw error("label vector size mismatch");
    int changed = 0;
    std::vector<double> lp(q);
    for (long i = 0; i < z.rows(); ++i) {
        for (int k = 0; k < q; ++k)
            lp[k] = mix.log_pi[k] + component_loglik(z.row(i), mix.comps[k]);
        double norm = logsumexp(lp);
        double u = rng.uniform();
        double acc = 0.0;
        int pick = q - 1;
        for (int k = 0; k < q; ++k) {
            acc += std::exp(lp[k] - norm);
            if (u <= acc) { pick = k; break; }
        }
        if (pick != (*labels)[i]) ++changed;
        (*labels)[i] = pick;
    }
    return changed;
}

namespace {

double label_score(const MatrixXd& z, const MixtureComponents& mix, long row, int k) {
    return mix.log_pi[k] + component_loglik(z.row(row), mix.comps[k]);
}

}  // namespace

SplitMergeResult split_merge_labels(Rng& rng, const MatrixXd& z,
                                    const MixtureComponents& mix, VectorXi* labels,
                                    int n_restricted) {
    SplitMergeResult res;
    const long n = z.rows();
    const int q = mix.q();
    if (n < 2 || q < 2) return res;

    long i = rng.uniform_int(n);
    long j = rng.uniform_int(n - 1);
    if (j >= i) ++j;
    const int ci = (*labels)[i];
    const int cj = (*labels)[j];

    auto counts = label_counts(*labels, q);

    // rows (other than the anchors) sharing the anchors' components
    auto gather_set = [&](int a, int b) {
        std::vector<long> s;
        for (long r = 0; r < n; ++r) {
            if (r == i || r == j) continue;
            int l = (*labels)[r];
            if (l == a || l == b) s.push_back(r);
        }
        return s;
    };

    // nearest-anchor initialization, then restricted conditional passes over
    // the two candidate labels; returns working assignments for `rows`
    auto launch_and_sweep = [&](const std::vector<long>& rows, int label_i, int label_j,
                                std::vector<int>* assign) {
        assign->resize(rows.size());
        for (size_t r = 0; r < rows.size(); ++r) {
            double di = (z.row(rows[r]) - z.row(i)).squaredNorm();
            double dj = (z.row(rows[r]) - z.row(j)).squaredNorm();
            (*assign)[r] = di <= dj ? label_i : label_j;
        }
        for (int sweep = 0; sweep < n_restricted; ++sweep) {
            for (size_t r = 0; r < rows.size(); ++r) {
                double la = label_score(z, mix, rows[r], label_i);
                double lb = label_score(z, mix, rows[r], label_j);
                double pa = 1.0 / (1.0 + std::exp(lb - la));
                (*assign)[r] = rng.uniform() < pa ? label_i : label_j;
            }
        }
    };

    if (ci == cj) {
        // split: anchor i moves to an empty component chosen uniformly
        std::vector<int> empty;
        for (int k = 0; k < q; ++k)
            if (counts[k] == 0) empty.push_back(k);
        if (empty.empty()) return res;
        res.attempted = true;
        res.was_split = true;
        const int cnew = empty[rng.uniform_int(static_cast<long>(empty.size()))];

        std::vector<long> rows = gather_set(ci, ci);
        std::vector<int> assign;
        launch_and_sweep(rows, cnew, ci, &assign);

        // final proposal-generating pass with recorded probability
        double log_qf = 0.0;
        double dtarget = label_score(z, mix, i, cnew) - label_score(z, mix, i, ci);
        for (size_t r = 0; r < rows.size(); ++r) {
            double la = label_score(z, mix, rows[r], cnew);
            double lb = label_score(z, mix, rows[r], ci);
            double norm = logsumexp({la, lb});
            double pa = std::exp(la - norm);
            bool to_new = rng.uniform() < pa;
            assign[r] = to_new ? cnew : ci;
            log_qf += to_new ? la - norm : lb - norm;
            if (to_new) dtarget += la - lb;
        }
        // reverse merge is deterministic; the split also chose among the
        // empty slots uniformly
        double log_alpha = dtarget - log_qf + std::log(double(empty.size()));
        if (std::log(rng.uniform()) < log_alpha) {
            res.accepted = true;
            (*labels)[i] = cnew;
            for (size_t r = 0; r < rows.size(); ++r) (*labels)[rows[r]] = assign[r];
        }
        return res;
    }

    // merge: component of anchor i is absorbed into anchor j's component
    res.attempted = true;
    std::vector<long> rows = gather_set(ci, cj);
    std::vector<int> assign;
    launch_and_sweep(rows, ci, cj, &assign);

    // conditioned pass scoring the probability of re-creating the current
    // configuration from the launch state
    double log_qr = 0.0;
    double dtarget = label_score(z, mix, i, cj) - label_score(z, mix, i, ci);
    for (size_t r = 0; r < rows.size(); ++r) {
        double la = label_score(z, mix, rows[r], ci);
        double lb = label_score(z, mix, rows[r], cj);
        double norm = logsumexp({la, lb});
        int cur = (*labels)[rows[r]];
        log_qr += (cur == ci ? la : lb) - norm;
        if (cur == ci) dtarget += lb - la;
    }
    // after the merge one more component is empty; the reverse split must
    // pick exactly the vacated slot among them
    int n_empty_after = 1;
    for (int k = 0; k < q; ++k)
        if (counts[k] == 0) ++n_empty_after;
    double log_alpha = dtarget + log_qr - std::log(double(n_empty_after));
    if (std::log(rng.uniform()) < log_alpha) {
        res.accepted = true;
        for (long r = 0; r < n; ++r)
            if ((*labels)[r] == ci) (*labels)[r] = cj;
    }
    return res;
}

VectorXd sample_mean_hyper(Rng& rng, const std::vector<const ComponentParams*>& comps,
                           double lambda) {
    if (comps.empty()) throw error("mean hyper update needs components");
    const int j = static_cast<int>(comps.front()->mu.size());
    MatrixXd a = MatrixXd::Identity(j, j);
    VectorXd b = VectorXd::Zero(j);
    for (const ComponentParams* c : comps) {
        a.noalias() += lambda * c->lambda;
        b.noalias() += lambda * (c->lambda * c->mu);
    }
    Eigen::LLT<MatrixXd> llt(0.5 * (a + a.transpose()));
    if (llt.info() != Eigen::Success) throw error("mean hyper precision not positive definite");
    VectorXd xi(j);
    for (int k = 0; k < j; ++k) xi[k] = rng.normal();
    return llt.solve(b) + llt.matrixU().solve(xi);
}

double sample_lambda_hyper(Rng& rng, const std::vector<const ComponentParams*>& comps,
                           const VectorXd& m, double a0, double b0) {
    if (comps.empty()) throw error("scale hyper update needs components");
    const double j = static_cast<double>(m.size());
    double shape = a0 + 0.5 * j * static_cast<double>(comps.size());
    double rate = b0;
    for (const ComponentParams* c : comps) {
        VectorXd dev = c->mu - m;
        rate += 0.5 * dev.dot(c->lambda * dev);
    }
    return rng.gamma(shape, rate);
}

}  // namespace dw
