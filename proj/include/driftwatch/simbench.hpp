#ifndef DRIFTWATCH_SIMBENCH_HPP
#define DRIFTWATCH_SIMBENCH_HPP

#include <string>
#include <vector>

#include "driftwatch/sampler.hpp"

namespace dw {

// Named synthetic stream families over ten base columns, thirty days of
// fifty rows, with one regime boundary after day fourteen (except "null"):
//   null  stationary
//   A     variance steps on columns three (x1.5) and four (x2.0)
//   B     mean steps on columns three (+0.5 sd) and four (+1.0 sd)
//   C     two-cluster stream on columns three/four whose cluster pairing
//         flips, leaving every single-column margin unchanged
//   D     missing-at-random rate step on column five (0.10 to 0.35)
//   E     two columns missing at a fixed marginal rate whose missingness
//         indicators change correlation structure (strongly positive to
//         strongly negative), the margins staying put
//   F     the variance steps of A over a bimodal two-cluster background on
//         columns one/two, plus discretized columns (binary/ordinal/nominal)
//         and a constant missing rate
//   G     F without the bimodal background (unimodal mixed stream)
//   H     the mean steps of B with discretized columns and missing values
std::vector<std::string> scenario_names();

struct ScenarioData {
    DataStream stream;
    int change_after_day = 0;  // last day of the first regime; 0 = no change
};

ScenarioData generate_scenario(const std::string& name, std::uint64_t seed,
                               int n_days = 30, int rows_per_day = 50);

// ---- baseline detector ----

// Two-sample T-squared scan of each day against the pooled trailing window,
// on complete rows, with the exact F-distribution control limit and a ridge
// fallback when the pooled scatter is ill conditioned.
struct HotellingScan {
    VectorXd stat;                  // per day, NaN where not testable
    VectorXd limit;                 // matching control limits
    std::vector<int> flagged_days;  // 1-based days whose batch breaks the limit
    int window = 3;
    double alpha = 0.01;
};

HotellingScan hotelling_scan(const DataStream& stream, int window = 3,
                             double alpha = 0.01);

// ---- scoring ----

struct DetectionScore {
    bool detected = false;  // a flag lands exactly on the true first changed day
    int n_false = 0;
    int n_eligible = 0;     // candidate days outside the true day + grace window
    double fpr = 0.0;
};

// `new_regime_days` are 1-based first days of claimed new regimes; flags on
// the `grace` days right after the true day count neither way
DetectionScore score_detection(const std::vector<int>& new_regime_days,
                               int change_after_day, int n_days, int grace = 2);

// ---- benchmark loop ----

struct BenchConfig {
    std::vector<std::string> scenarios = scenario_names();
    int n_reps = 10;
    int n_days = 30;
    int rows_per_day = 50;
    std::uint64_t seed = 1;
    SamplerConfig sampler;
    double ht2_alpha = 0.01;
    int ht2_window = 3;
};

struct BenchRow {
    std::string scenario;
    int rep = 0;
    int change_after_day = 0;
    bool model_detected = false;
    double model_fpr = 0.0;
    double model_seconds = 0.0;
    int model_regimes = 1;
    bool ht2_detected = false;
    double ht2_fpr = 0.0;
};

std::vector<BenchRow> run_bench(const BenchConfig& cfg);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace dw

#endif  // DRIFTWATCH_SIMBENCH_HPP
