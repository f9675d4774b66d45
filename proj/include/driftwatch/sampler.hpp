#ifndef DRIFTWATCH_SAMPLER_HPP
#define DRIFTWATCH_SAMPLER_HPP

#include <string>
#include <vector>

#include "driftwatch/data_model.hpp"
#include "driftwatch/mixture.hpp"

namespace dw {

enum class GraphMode { full, sparse, decomposable };

std::string graph_mode_name(GraphMode m);
GraphMode graph_mode_from_name(const std::string& s);

struct SamplerConfig {
    // mixture
    int q = 7;
    double alpha = 0.1;
    int n_restricted = 5;  // restricted passes inside the label split/merge

    // regime process
    int max_regimes = 60;
    double trans_w = 1.0;  // initial Beta(w, v) stay-probability hyper
    double trans_v = 1.0;
    bool update_wv = true;
    double wv_step = 0.2;        // log-scale random-walk step
    double wv_prior_shape = 1.0;  // Gamma prior on w and v
    double wv_prior_rate = 0.1;
    bool fix_transition_prob = false;  // freeze all stay probabilities
    double fixed_stay_prob = 0.5;

    // component prior
    bool update_mean_hyper = true;  // refresh m and lambda each sweep
    double lambda_a0 = 1.0;         // Gamma prior on lambda (shape, rate)
    double lambda_b0 = 1.0;

    // graph
    GraphMode graph_mode = GraphMode::sparse;
    bool update_graph = true;
    double edge_prior = 0.2;  // independent edge inclusion probability
    double sigma_g = 0.5;     // proposal scale for the new Cholesky element
    int graph_flips_per_sweep = 1;
    int n_mc_norm = 200;  // sample size for simulated prior constants

    // schedule
    int n_sweeps = 1000;
    int burn_in = 500;
    int snapshot_every = 5;
    double cutoff = 0.5;  // posterior change probability that calls a change
    std::uint64_t seed = 1;
    bool save_phi_trace = true;
};

// regime boundary snapshot kept for downstream fault analysis: the mixtures
// before and after the most recent regime boundary
struct MixtureSnapshot {
    MixtureComponents before;
    MixtureComponents after;
    int boundary_day = 0;  // 1-based first day of the newest regime
    long sweep = 0;
};

struct SweepCounters {
    long phi_split_attempt = 0, phi_split_accept = 0;
    long phi_merge_attempt = 0, phi_merge_accept = 0;
    long phi_swap_flips = 0;
    long label_sm_attempt = 0, label_sm_accept = 0;
    long graph_attempt = 0, graph_accept = 0;
    long wv_attempt = 0, wv_accept = 0;
};

struct ChainResult {
    VectorXd change_prob;            // length T-1: P(phi_{t+1} = phi_t + 1)
    std::vector<int> changepoints;   // 1-based days t+1 whose probability clears the cutoff
    VectorXi map_phi;                // most frequent regime vector after burn-in
    std::vector<int> regime_trace;   // number of regimes per sweep
    std::vector<MixtureSnapshot> snapshots;
    SweepCounters counters;
    NormConstCounters nc_counters;
    int n_sweeps = 0;
    int burn_in = 0;
    double seconds = 0.0;
};

// ---- free pieces exposed for focused testing ----

// log prior of a regime vector under per-regime stay probabilities;
// regimes are 0-based, phi_0 must be 0 and steps are 0 or +1
double log_phi_prior(const VectorXi& phi, const VectorXd& stay_prob);

void count_transitions(const VectorXi& phi, std::vector<long>* stays,
                       std::vector<long>* exits);

// stick-integrated label prior: log E prod_k pi_k^{n_k} under truncated
// stick breaking with concentration alpha
double stick_label_log_prior(const std::vector<long>& counts, double alpha);

// one random-walk step on a Beta hyperparameter pair given the vector of
// stay probabilities; returns whether the joint proposal was accepted
bool wv_mh_step(Rng& rng, const VectorXd& stay_probs, double* w, double* v,
                double step, double prior_shape, double prior_rate);

// one refresh pass of row `i` of a day's latent matrix given its component:
// unconstrained coordinates jointly, then truncated univariate passes over
// the constrained ones
void refresh_latent_row(Rng& rng, const std::vector<VariableSpec>& vars,
                        const LatentLayout& layout,
                        const Eigen::Ref<const Eigen::RowVectorXd>& obs,
                        const ComponentParams& comp, MatrixXd* z, long i);

// split-point proposal over the n-1 internal day boundaries of a segment
struct SplitPointDist {
    VectorXd probs;            // one per internal boundary
    std::vector<int> anchors;  // 1-based evaluated boundaries
};
SplitPointDist split_point_distribution(Rng& rng,
                                        const std::vector<const MatrixXd*>& day_rows,
                                        const NGWHyper& prior, const Graph& g);

// joint edge-flip proposal for every occupied component: double reversible
// jump with exact prior auxiliary draws so no normalizing constants appear
struct DrjProposal {
    bool valid = false;
    double log_alpha = -kInf;           // excludes the graph prior ratio
    std::vector<MatrixXd> new_lambda;   // per cell, completed under the new graph
};
DrjProposal drj_edge_proposal(Rng& rng, const Graph& g, int a, int b, bool add,
                              double nu, const MatrixXd& d,
                              const std::vector<const MatrixXd*>& cell_lambda,
                              const std::vector<const MatrixXd*>& cell_dpost,
                              double sigma_g);

// ---- the sampler ----

struct RegimeMixture {
    MixtureComponents mix;
};

class Sampler {
public:
    Sampler(const DataStream& stream, SamplerConfig cfg);

    // one full sweep in fixed scan order: latent, labels, transitions,
    // hypers, regime split/merge, boundary shifts, components, graph
    void sweep();

    ChainResult run(const std::string& out_dir = "");

    // individual steps, public so tests can drive them directly
    void update_latent();
    void update_labels();
    void update_transitions();
    void update_wv();
    void update_hypers();
    void phi_merge_split();
    void phi_swap();
    void refresh_components();
    void update_graph();

    // state access
    const VectorXi& phi() const { return phi_; }
    int n_regimes() const { return phi_[phi_.size() - 1] + 1; }
    const std::vector<RegimeMixture>& regimes() const { return regimes_; }
    const std::vector<VectorXi>& labels() const { return labels_; }
    const std::vector<MatrixXd>& latent() const { return z_; }
    const NGWHyper& hyper() const { return hyper_; }
    const Graph& graph() const { return graph_; }
    const VectorXd& stay_prob() const { return stay_prob_; }
    double trans_w() const { return trans_w_; }
    double trans_v() const { return trans_v_; }
    const SweepCounters& counters() const { return counters_; }
    NormConstCounters nc_counters() const { return router_.counters(); }
    const SamplerConfig& config() const { return cfg_; }
    bool latent_static() const { return latent_static_; }
    Rng& rng() { return rng_; }

private:
    friend struct SamplerTestHook;
    std::vector<int> regime_days(int r) const;  // 0-based day indices
    std::vector<GaussStats> cell_stats(const std::vector<int>& days) const;
    double collapsed_marginal(const std::vector<GaussStats>& cells);
    void refresh_regime(int r);
    MixtureComponents sample_regime_mixture(const std::vector<GaussStats>& cells);

    const DataStream& stream_;
    SamplerConfig cfg_;
    LatentLayout layout_;
    std::vector<MatrixXd> z_;
    bool latent_static_ = false;

    VectorXi phi_;                       // per day, 0-based regime
    std::vector<RegimeMixture> regimes_; // one per occupied regime
    std::vector<VectorXi> labels_;       // per day, per row component label
    VectorXd stay_prob_;                 // length r_cap
    double trans_w_, trans_v_;
    NGWHyper hyper_;
    Graph graph_;
    NormConstRouter router_;
    Rng rng_;
    SweepCounters counters_;
    int r_cap_ = 0;
};

// ---- chain outputs (chain_io.cpp) ----

void write_chain_outputs(const std::string& out_dir, const Sampler& sampler,
                         const ChainResult& result,
                         const std::vector<VectorXi>& phi_trace,
                         const DataStream& stream);

// reads back the boundary snapshots serialized by write_chain_outputs
std::vector<MixtureSnapshot> read_snapshots(const std::string& path);

// JSON text round-trip for the configuration; parsing rejects unknown keys
// so config-file typos fail loudly ("transform" is tolerated for pipelines)
std::string sampler_config_to_json_text(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json_text(const std::string& text);

// final posterior state serialized by write_chain_outputs, enough to simulate
// replica streams that follow the fitted regime structure
struct FinalModel {
    VectorXi phi;  // per day, 0-based regimes
    std::vector<MixtureComponents> regime_mixtures;
    std::vector<std::string> variables;
};
FinalModel read_final_model(const std::string& path);

// draws day rows from a fitted mixture and maps the latent coordinates back
// to observed cells (level values, censored bounds, argmax categories);
// indicator variables at one mask their source column with NaN
MatrixXd sample_observed_rows(Rng& rng, const std::vector<VariableSpec>& vars,
                              const LatentLayout& layout,
                              const MixtureComponents& mix, long n_rows);

}  // namespace dw

#endif
