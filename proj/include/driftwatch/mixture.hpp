#ifndef DRIFTWATCH_MIXTURE_HPP
#define DRIFTWATCH_MIXTURE_HPP

#include <vector>

#include "driftwatch/gwishart.hpp"

namespace dw {

// Normal--G-Wishart conjugate family: mu | Lambda ~ N(m, (lambda Lambda)^-1),
// Lambda ~ W_G(nu, D).
struct NGWHyper {
    VectorXd m;
    double lambda = 1.0;
    double nu = 3.0;
    MatrixXd d;
};

// Streaming sufficient statistics for a Gaussian component.
struct GaussStats {
    long n = 0;
    VectorXd sum;
    MatrixXd sqsum;  // sum of z z'

    explicit GaussStats(int j = 0)
        : sum(VectorXd::Zero(j)), sqsum(MatrixXd::Zero(j, j)) {}
    void add_row(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
        ++n;
        sum += z.transpose();
        sqsum.noalias() += z.transpose() * z;
    }
    void add_rows(const MatrixXd& z) {
        n += z.rows();
        sum += z.colwise().sum().transpose();
        sqsum.noalias() += z.transpose() * z;
    }
    GaussStats& operator+=(const GaussStats& o) {
        n += o.n;
        sum += o.sum;
        sqsum += o.sqsum;
        return *this;
    }
    VectorXd mean() const { return n > 0 ? VectorXd(sum / double(n)) : sum; }
    MatrixXd centered_scatter() const;
};

NGWHyper ngw_posterior(const NGWHyper& prior, const GaussStats& s);

// Component parameters with cached log-determinant for density evaluation.
struct ComponentParams {
    VectorXd mu;
    MatrixXd lambda;  // precision with zeros off the graph
    double logdet = 0.0;
};
ComponentParams make_component(VectorXd mu, MatrixXd lambda);

// joint draw (mu, Lambda) from the (posterior) NGW; empty stats give a prior draw
ComponentParams sample_component_posterior(Rng& rng, const NGWHyper& prior,
                                           const Graph& g, const GaussStats& stats);

double component_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& z,
                        const ComponentParams& p);

// Collapsed marginal likelihood of the rows summarized in `stats` under the
// NGW prior restricted to graph g.  The router must carry the same (nu, D).
double ngw_log_marginal(const NGWHyper& prior, const GaussStats& stats,
                        const Graph& g, NormConstRouter& router);

// ---- truncated stick-breaking mixture ----

struct MixtureComponents {
    std::vector<ComponentParams> comps;
    VectorXd log_pi;
    int q() const { return static_cast<int>(comps.size()); }
};

std::vector<long> label_counts(const VectorXi& labels, int q);

// v_k ~ Beta(1 + n_k, alpha + n_{k+1..q}), final stick forced to 1;
// returns log mixture weights
VectorXd sample_stick_log_weights(Rng& rng, const std::vector<long>& counts, double alpha);

double mixture_loglik(const Eigen::Ref<const Eigen::RowVectorXd>& z,
                      const MixtureComponents& mix);
double mixture_loglik_rows(const MatrixXd& z, const MixtureComponents& mix);

// one full conditional pass over labels given fixed components; returns the
// number of rows whose label changed
int gibbs_labels(Rng& rng, const MatrixXd& z, const MixtureComponents& mix,
                 VectorXi* labels);

// Metropolized split/merge on the label vector with components held fixed:
// two anchor rows choose the move, a nearest-anchor launch refined by
// restricted conditional passes builds the proposal, and the reverse path is
// scored by conditioning the same machinery on the current configuration.
struct SplitMergeResult {
    bool attempted = false;
    bool accepted = false;
    bool was_split = false;
};
SplitMergeResult split_merge_labels(Rng& rng, const MatrixXd& z,
                                    const MixtureComponents& mix, VectorXi* labels,
                                    int n_restricted = 5);

// ---- shared hyperparameter refreshes ----

// location hyper: prior m ~ N(0, I), components contribute lambda * Lambda_c
VectorXd sample_mean_hyper(Rng& rng, const std::vector<const ComponentParams*>& comps,
                           double lambda);

// scale hyper: prior lambda ~ Gamma(a0, b0) (shape, rate)
double sample_lambda_hyper(Rng& rng, const std::vector<const ComponentParams*>& comps,
                           const VectorXd& m, double a0, double b0);

}  // namespace dw

#endif
