#ifndef DRIFTWATCH_FAULT_HPP
#define DRIFTWATCH_FAULT_HPP

#include <string>
#include <vector>

#include "driftwatch/sampler.hpp"

namespace dw {

// Gaussian mixture carried in moment form so that coordinate marginals are
// plain submatrices.  Built once from the precision-form components.
struct MomentComponent {
    VectorXd mu;
    MatrixXd sigma;
    MatrixXd lambda;       // inverse of sigma
    MatrixXd chol_lower;   // L with L L' = sigma, for sampling
    double logdet_lambda = 0.0;
};

struct MomentMixture {
    std::vector<MomentComponent> comps;
    VectorXd log_pi;
    int dim() const { return comps.empty() ? 0 : static_cast<int>(comps[0].mu.size()); }
};

MomentComponent make_moment_component(VectorXd mu, MatrixXd sigma);
MomentMixture to_moments(const MixtureComponents& mix);

// keeps the listed coordinates, in the given order
MomentMixture marginal_mixture(const MomentMixture& mix, const std::vector<int>& keep);

double mixture_logpdf(const MomentMixture& mix, const VectorXd& x);

// exact Hellinger distance between two Gaussians in moment form
double hellinger_gauss(const MomentComponent& a, const MomentComponent& b);

struct HellingerEstimate {
    double h = 0.0;            // Hellinger distance in [0, 1]
    double affinity = 1.0;     // overlap integral, h = sqrt(1 - affinity)
    double affinity_se = 0.0;  // zero on the exact single-component route
    long n_samples = 0;
};

// single-component pairs use the closed form; mixtures use importance
// sampling from the equal-weight average of the two densities, whose
// integrand is bounded by one
HellingerEstimate hellinger_mixture(Rng& rng, const MomentMixture& a,
                                    const MomentMixture& b, int n_samples);

// ---- per-variable decomposition over boundary snapshots ----

struct VariableFault {
    std::string name;
    double isolated = 0.0;  // Hellinger of this variable's block alone, / h
    double dropped = 0.0;   // 1 - Hellinger without this block / h
};

struct FaultReport {
    double h = 0.0;                          // mean full-model Hellinger
    double h_se = 0.0;                       // mean simulation error
    std::vector<VariableFault> per_variable;  // variable order
    std::vector<int> ranking;                 // indices by decreasing isolated share
    std::vector<int> ranking_dropped;         // indices by decreasing dropped loss
    int n_snapshots = 0;

    // per-snapshot series behind the means (rows follow the snapshot list;
    // snapshots whose full distance is numerically zero keep zero rows)
    std::vector<long> snapshot_sweeps;
    std::vector<int> snapshot_days;
    VectorXd snapshot_h;
    MatrixXd snapshot_isolated;  // n_snapshots x n_vars
    MatrixXd snapshot_dropped;
};

struct FaultConfig {
    int n_mc = 20000;         // samples per mixture Hellinger estimate
    std::uint64_t seed = 1;
};

FaultReport fault_report(const std::vector<MixtureSnapshot>& snaps,
                         const std::vector<VariableSpec>& vars,
                         const LatentLayout& layout, const FaultConfig& cfg);

// fault_report.json and fault_losses.csv
void write_fault_outputs(const std::string& out_dir, const FaultReport& report);

}  // namespace dw

#endif  // DRIFTWATCH_FAULT_HPP
