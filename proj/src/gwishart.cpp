#include "driftwatch/gwishart.hpp"

#include <algorithm>

namespace dw {

MatrixXd complete_cholesky(MatrixXd psi, const Graph& g) {
    const int p = g.size();
    if (psi.rows() != p || psi.cols() != p) throw error("complete_cholesky: size mismatch");
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < i; ++j) psi(i, j) = 0.0;  // keep strictly upper triangular
        for (int j = i + 1; j < p; ++j) {
            if (g.edge(i, j)) continue;
            if (i == 0) {
                psi(0, j) = 0.0;
            } else {
                double s = 0.0;
                for (int l = 0; l < i; ++l) s += psi(l, i) * psi(l, j);
                psi(i, j) = -s / psi(i, i);
            }
        }
    }
    return psi;
}

MatrixXd sample_wishart_full(Rng& rng, double nu, const MatrixXd& D) {
    // Bartlett decomposition of a Wishart with density |L|^{(nu-2)/2} e^{-tr(DL)/2},
    // i.e. standard degrees of freedom nu + p - 1 and scale D^{-1}
    const int p = static_cast<int>(D.rows());
    const double df = nu + p - 1;
    Eigen::LLT<MatrixXd> llt(D);
    if (llt.info() != Eigen::Success) throw error("sample_wishart_full: D not positive definite");
    MatrixXd a = MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        a(i, i) = std::sqrt(rng.chisq(df - i));
        for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    // scale = D^{-1} = L^{-T} L^{-1}; draw = L^{-T} A A' L^{-1}
    MatrixXd la = llt.matrixL().toDenseMatrix().transpose().triangularView<Eigen::Upper>().solve(a);
    return la * la.transpose();
}

MatrixXd ips_covariance_select(const Graph& g, const MatrixXd& target, double tol,
                               int max_iter) {
    const int p = g.size();
    MatrixXd w = target;
    for (int it = 0; it < max_iter; ++it) {
        MatrixXd prev = w;
        for (int i = 0; i < p; ++i) {
            std::vector<int> nb = g.neighbors(i);
            if (nb.empty()) {
                for (int j = 0; j < p; ++j)
                    if (j != i) { w(i, j) = 0.0; w(j, i) = 0.0; }
                continue;
            }
            const int m = static_cast<int>(nb.size());
            MatrixXd wnn(m, m);
            VectorXd si(m);
            for (int a = 0; a < m; ++a) {
                si(a) = target(nb[a], i);
                for (int b = 0; b < m; ++b) wnn(a, b) = w(nb[a], nb[b]);
            }
            VectorXd beta_star = wnn.ldlt().solve(si);
            VectorXd beta = VectorXd::Zero(p);
            for (int a = 0; a < m; ++a) beta(nb[a]) = beta_star(a);
            VectorXd repl = w * beta;
            repl(i) = w(i, i);
            w.row(i) = repl.transpose();
            w.col(i) = repl;
        }
        if ((w - prev).cwiseAbs().maxCoeff() < tol) return w;
    }
    throw error("ips_covariance_select: projection did not converge");
}

MatrixXd sample_gwishart(Rng& rng, const Graph& g, double nu, const MatrixXd& D,
                         double tol, int max_iter) {
    MatrixXd lambda = sample_wishart_full(rng, nu, D);
    if (g.is_complete()) return lambda;
    MatrixXd sigma = lambda.llt().solve(MatrixXd::Identity(g.size(), g.size()));
    MatrixXd w = ips_covariance_select(g, sigma, tol, max_iter);
    MatrixXd lam = w.llt().solve(MatrixXd::Identity(g.size(), g.size()));
    // re-complete the Cholesky factor so non-edges are exactly zero
    MatrixXd psi = complete_cholesky(chol_upper(lam), g);
    MatrixXd out = psi.transpose() * psi;
    return 0.5 * (out + out.transpose());
}

double log_gwishart_unnorm(const MatrixXd& lambda, double nu, const MatrixXd& D) {
    return 0.5 * (nu - 2.0) * logdet_spd(lambda) - 0.5 * (D.transpose() * lambda).trace();
}

double log_norm_const_full(int j, double nu, const MatrixXd& D) {
    const double d = nu + j - 1;
    return 0.5 * d * j * std::log(2.0) + lmvgamma(j, 0.5 * d) - 0.5 * d * logdet_spd(D);
}

double log_norm_const_decomposable(const Graph& g, double nu, const MatrixXd& D) {
    if (g.is_complete()) return log_norm_const_full(g.size(), nu, D);
    CliqueDecomposition dec = clique_decomposition(g);
    auto block_const = [&](const std::vector<int>& vs) {
        const int m = static_cast<int>(vs.size());
        MatrixXd sub(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) sub(a, b) = D(vs[a], vs[b]);
        return log_norm_const_full(m, nu, sub);
    };
    double v = 0.0;
    for (const auto& c : dec.cliques) v += block_const(c);
    for (const auto& s : dec.separators) v -= block_const(s);
    return v;
}

NormConstResult log_norm_const_mc(const Graph& g, double nu, const MatrixXd& D,
                                  int n_mc, Rng& rng) {
    // Monte Carlo over the free Cholesky elements: the non-free elements are
    // completed and contribute exp(-sum(phi_nonfree^2)/2); the free part
    // integrates in closed form.
    const int p = g.size();
    Eigen::LLT<MatrixXd> llt_dinv(MatrixXd(D.llt().solve(MatrixXd::Identity(p, p))));
    if (llt_dinv.info() != Eigen::Success) throw error("log_norm_const_mc: bad scale matrix");
    MatrixXd t = llt_dinv.matrixL().toDenseMatrix().transpose();  // D^{-1} = T' T, T upper

    double analytic = 0.5 * g.edge_count() * std::log(2.0 * M_PI);
    for (int i = 0; i < p; ++i) {
        const double b = nu + g.later_neighbors(i);
        analytic += 0.5 * b * std::log(2.0) + std::lgamma(0.5 * b) +
                    (b + g.earlier_neighbors(i)) * std::log(t(i, i));
    }
    if (g.is_complete()) return {analytic, 0.0};

    MatrixXd phi = MatrixXd::Zero(p, p), psi = MatrixXd::Zero(p, p);
    double mean = 0.0, m2 = 0.0;  // Welford accumulation of exp(-f/2)
    for (int s = 0; s < n_mc; ++s) {
        double f = 0.0;
        for (int i = 0; i < p; ++i) {
            phi(i, i) = std::sqrt(rng.chisq(nu + g.later_neighbors(i)));
            psi(i, i) = phi(i, i) * t(i, i);
            for (int j = i + 1; j < p; ++j) {
                if (g.edge(i, j)) {
                    phi(i, j) = rng.normal();
                    double acc = 0.0;
                    for (int k = i; k <= j; ++k) acc += phi(i, k) * t(k, j);
                    psi(i, j) = acc;
                } else {
                    double pij = 0.0;
                    if (i > 0) {
                        for (int l = 0; l < i; ++l) pij += psi(l, i) * psi(l, j);
                        pij = -pij / psi(i, i);
                    }
                    psi(i, j) = pij;
                    double acc = 0.0;
                    for (int k = i; k < j; ++k) acc += phi(i, k) * t(k, j);
                    phi(i, j) = (pij - acc) / t(j, j);
                    f += sq(phi(i, j));
                }
            }
        }
        double x = std::exp(-0.5 * f);
        double delta = x - mean;
        mean += delta / (s + 1);
        m2 += delta * (x - mean);
    }
    if (mean <= 0.0) throw error("log_norm_const_mc: estimator collapsed to zero");
    double var_mean = m2 / (static_cast<double>(n_mc) - 1.0) / n_mc;
    return {analytic + std::log(mean), std::sqrt(var_mean) / mean};
}

double log_norm_const_laplace(const Graph& g, double nu, const MatrixXd& D) {
    const int p = g.size();
    if (nu <= 2.0) throw error("log_norm_const_laplace: needs nu > 2");
    // mode: covariance matches D/(nu-2) on the free entries, inverse on the graph
    MatrixXd sigma = ips_covariance_select(g, MatrixXd(D / (nu - 2.0)));
    MatrixXd khat = sigma.llt().solve(MatrixXd::Identity(p, p));
    MatrixXd psi = complete_cholesky(chol_upper(khat), g);
    khat = psi.transpose() * psi;

    double lmode = 0.5 * (nu - 2.0) * logdet_spd(khat) - 0.5 * (D * khat).trace();

    // free coordinates: diagonal then edges
    std::vector<std::pair<int, int>> coords;
    for (int i = 0; i < p; ++i) coords.emplace_back(i, i);
    for (auto& e : g.edges()) coords.push_back(e);
    const int d = static_cast<int>(coords.size());
    MatrixXd h(d, d);
    for (int a = 0; a < d; ++a) {
        auto [i, j] = coords[a];
        for (int b = a; b < d; ++b) {
            auto [k, l] = coords[b];
            double v;
            if (i == j && k == l) v = sq(sigma(i, k));
            else if (i == j) v = 2.0 * sigma(i, k) * sigma(i, l);
            else if (k == l) v = 2.0 * sigma(k, i) * sigma(k, j);
            else v = 2.0 * (sigma(i, k) * sigma(j, l) + sigma(i, l) * sigma(j, k));
            h(a, b) = 0.5 * (nu - 2.0) * v;
            h(b, a) = h(a, b);
        }
    }
    return lmode + 0.5 * d * std::log(2.0 * M_PI) - 0.5 * logdet_spd(h);
}

bool NormConstRouter::chordal_cached(const Graph& g, const std::string& key) {
    auto it = chordal_cache_.find(key);
    if (it != chordal_cache_.end()) return it->second;
    bool c = is_chordal(g);
    chordal_cache_.emplace(key, c);
    return c;
}

double NormConstRouter::prior_log_const(const Graph& g) {
    if (g.is_complete()) return log_norm_const_full(g.size(), nu_prior_, d_prior_);
    std::string key = g.key();
    auto it = prior_cache_.find(key);
    if (it != prior_cache_.end()) return it->second;
    double v;
    if (chordal_cached(g, key)) {
        v = log_norm_const_decomposable(g, nu_prior_, d_prior_);
    } else {
        ++counters_.mc_calls;
        Rng rng = Rng::substream(mc_seed_, std::hash<std::string>{}(key));
        v = log_norm_const_mc(g, nu_prior_, d_prior_, n_mc_, rng).value;
    }
    prior_cache_.emplace(std::move(key), v);
    return v;
}

double NormConstRouter::posterior_log_const(const Graph& g, double nu_post,
                                            const MatrixXd& d_post) {
    if (g.is_complete()) return log_norm_const_full(g.size(), nu_post, d_post);
    if (chordal_cached(g, g.key())) return log_norm_const_decomposable(g, nu_post, d_post);
    ++counters_.laplace_calls;
    return log_norm_const_laplace(g, nu_post, d_post);
}

}  // namespace dw
