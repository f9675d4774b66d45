#ifndef DRIFTWATCH_GWISHART_HPP
#define DRIFTWATCH_GWISHART_HPP

#include <unordered_map>

#include "driftwatch/graph.hpp"

namespace dw {

// G-Wishart distribution over precision matrices constrained to a graph,
// with unnormalized density |L|^{(nu-2)/2} exp(-tr(D L)/2) on the cone of
// positive definite matrices whose off-graph entries vanish.

// Fill the non-free entries of an upper-triangular Cholesky factor so that
// Psi' Psi has exact zeros at every non-edge.  psi carries the free entries
// (diagonal and edges) on input; non-free entries are overwritten.
MatrixXd complete_cholesky(MatrixXd psi, const Graph& g);

// exact sampler: unconstrained Wishart draw, iterative block projection onto
// the graph's neighborhood constraints, then a Cholesky re-completion so the
// zero pattern holds to machine precision
MatrixXd sample_gwishart(Rng& rng, const Graph& g, double nu, const MatrixXd& D,
                         double tol = 1e-8, int max_iter = 500);

// unconstrained Wishart draw from the same parameterization (complete graph)
MatrixXd sample_wishart_full(Rng& rng, double nu, const MatrixXd& D);

double log_gwishart_unnorm(const MatrixXd& lambda, double nu, const MatrixXd& D);

// --- normalizing constants ---
struct NormConstResult {
    double value = 0.0;  // log I_G(nu, D)
    double se = 0.0;     // Monte Carlo standard error of the log (0 when exact)
};

// closed forms
double log_norm_const_full(int j, double nu, const MatrixXd& D);
double log_norm_const_decomposable(const Graph& g, double nu, const MatrixXd& D);

// Monte Carlo estimator (free Cholesky elements integrated by simulation)
NormConstResult log_norm_const_mc(const Graph& g, double nu, const MatrixXd& D,
                                  int n_mc, Rng& rng);

// Laplace approximation around the constrained mode (found by iterative
// proportional scaling in covariance space)
double log_norm_const_laplace(const Graph& g, double nu, const MatrixXd& D);

// covariance-selection solve: the unique covariance matching target on the
// free entries whose inverse lives on the graph
MatrixXd ips_covariance_select(const Graph& g, const MatrixXd& target,
                               double tol = 1e-10, int max_iter = 2000);

// --- routing with caching and instrumentation ---
struct NormConstCounters {
    long mc_calls = 0;       // Monte Carlo estimator invocations
    long laplace_calls = 0;  // Laplace estimator invocations
};

// Chooses the evaluation route per call site: closed form for complete or
// chordal graphs, the MC estimator for prior-side constants, and the Laplace
// approximation for posterior-side constants.  Prior-side values and
// chordality are cached per graph.
class NormConstRouter {
public:
    NormConstRouter(double nu_prior, MatrixXd d_prior, int n_mc, std::uint64_t mc_seed)
        : nu_prior_(nu_prior), d_prior_(std::move(d_prior)), n_mc_(n_mc), mc_seed_(mc_seed) {}

    double prior_log_const(const Graph& g);
    double posterior_log_const(const Graph& g, double nu_post, const MatrixXd& d_post);

    const NormConstCounters& counters() const { return counters_; }
    void reset_counters() { counters_ = NormConstCounters(); }

    double nu_prior() const { return nu_prior_; }
    const MatrixXd& d_prior() const { return d_prior_; }

private:
    bool chordal_cached(const Graph& g, const std::string& key);

    double nu_prior_;
    MatrixXd d_prior_;
    int n_mc_;
    std::uint64_t mc_seed_;
    NormConstCounters counters_;
    std::unordered_map<std::string, double> prior_cache_;
    std::unordered_map<std::string, bool> chordal_cache_;
};

}  // namespace dw

#endif
