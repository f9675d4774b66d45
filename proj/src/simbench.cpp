#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

#include "driftwatch/simbench.hpp"

namespace dw {

std::vector<std::string> scenario_names() {
    return {"null", "A", "B", "C", "D", "E", "F", "G", "H"};
}

namespace {

std::uint64_t name_tag(const std::string& name) {
    std::uint64_t h = 0x73696dULL;
    for (char c : name) h = h * 131 + static_cast<unsigned char>(c);
    return h;
}

double probit(double p) {
    static const boost::math::normal_distribution<double> stdnorm;
    return boost::math::quantile(stdnorm, p);
}

bool has_discrete_columns(const std::string& name) {
    return name == "F" || name == "G" || name == "H";
}

std::vector<VariableSpec> scenario_variables(const std::string& name, int n_vars) {
    std::vector<VariableSpec> vars;
    for (int j = 0; j < n_vars; ++j) {
        VariableSpec v;
        v.name = "x" + std::to_string(j + 1);
        v.kind = VariableKind::continuous;
        vars.push_back(v);
    }
    if (has_discrete_columns(name) && n_vars == 10) {
        vars[7].kind = VariableKind::binary;
        vars[7].levels = {"0", "1"};
        vars[8].kind = VariableKind::ordinal;
        vars[8].ordinal_levels = {-1.0, 0.0, 1.0};
        vars[9].kind = VariableKind::nominal;
        vars[9].levels = {"lo", "mid", "hi"};
    }
    return vars;
}

}  // namespace

ScenarioData generate_scenario(const std::string& name, std::uint64_t seed,
                               int n_days, int rows_per_day) {
    const auto names = scenario_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw error("unknown scenario '" + name + "'");
    if (n_days < 2 || rows_per_day < 1)
        throw error("scenario needs at least two days and one row per day");

    const int j = 10;
    Rng rng = Rng::substream(seed, name_tag(name));

    ScenarioData out;
    out.change_after_day = name == "null" ? 0 : std::min(14, n_days - 1);
    out.stream.variables = scenario_variables(name, j);

    // unit-variance two-cluster margins: offset^2 + spread^2 = 1 exactly
    const double c_noise = 1.0 / std::sqrt(3.25);
    const double c_delta = 1.5 * c_noise;
    // missingness-structure family: indicator latents above this cut are
    // masked, so every margin misses at rate 0.15 regardless of correlation
    const double miss_cut = probit(0.85);
    const double r_pre = 0.8, r_post = -0.8;

    const bool scale_step = name == "A" || name == "F" || name == "G";
    const bool mean_step = name == "B" || name == "H";
    const bool flat_missing = has_discrete_columns(name);

    for (int day = 1; day <= n_days; ++day) {
        const bool post = out.change_after_day > 0 && day > out.change_after_day;
        MatrixXd m(rows_per_day, j);
        for (int i = 0; i < rows_per_day; ++i) {
            VectorXd z(j);
            for (int c = 0; c < j; ++c) z[c] = rng.normal();

            if (name == "C") {
                const bool coin = rng.uniform() < 0.5;
                const double c1 = coin ? c_delta : -c_delta;
                const double c2 = post ? -c1 : c1;
                z[2] = c1 + c_noise * z[2];
                z[3] = c2 + c_noise * z[3];
            } else if (name == "F") {
                // static bimodal background on the first two columns
                const double c1 = rng.uniform() < 0.5 ? c_delta : -c_delta;
                z[0] = c1 + c_noise * z[0];
                z[1] = c1 + c_noise * z[1];
            }

            if (post && scale_step) {
                z[2] *= std::sqrt(1.5);
                z[3] *= std::sqrt(2.0);
            } else if (post && mean_step) {
                z[2] += 0.5;
                z[3] += 1.0;
            }

            for (int c = 0; c < j; ++c) m(i, c) = z[c];

            if (name == "D") {
                const double rate = post ? 0.35 : 0.10;
                if (rng.uniform() < rate) m(i, 4) = kNaN;
            } else if (name == "E") {
                const double r = post ? r_post : r_pre;
                const double w1 = rng.normal();
                const double w2 = r * w1 + std::sqrt(1.0 - r * r) * rng.normal();
                if (w1 > miss_cut) m(i, 4) = kNaN;
                if (w2 > miss_cut) m(i, 5) = kNaN;
            } else if (flat_missing) {
                if (rng.uniform() < 0.10) m(i, 4) = kNaN;
            }

            if (has_discrete_columns(name)) {
                m(i, 7) = m(i, 7) > 0.0 ? 1.0 : 0.0;
                m(i, 8) = m(i, 8) <= -0.5 ? -1.0 : (m(i, 8) <= 0.5 ? 0.0 : 1.0);
                m(i, 9) = m(i, 9) <= -0.8 ? 0.0 : (m(i, 9) <= 0.8 ? 1.0 : 2.0);
            }
        }
        DayBatch batch;
        batch.day = day;
        batch.values = std::move(m);
        out.stream.days.push_back(std::move(batch));
    }
    return out;
}

HotellingScan hotelling_scan(const DataStream& stream, int window, double alpha) {
    if (window < 1) throw error("scan window must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw error("alpha must be in (0, 1)");
    const int t = stream.n_days();
    const int p = stream.n_vars();

    HotellingScan out;
    out.window = window;
    out.alpha = alpha;
    out.stat = VectorXd::Constant(t, kNaN);
    out.limit = VectorXd::Constant(t, kNaN);

    auto complete_rows = [&](int day_idx) {
        const MatrixXd& v = stream.days[day_idx].values;
        MatrixXd keep(v.rows(), p);
        long n = 0;
        for (long r = 0; r < v.rows(); ++r) {
            bool ok = true;
            for (int c = 0; c < p; ++c)
                if (is_missing(v(r, c))) {
                    ok = false;
                    break;
                }
            if (ok) keep.row(n++) = v.row(r);
        }
        return MatrixXd(keep.topRows(n));
    };

    for (int day = window; day < t; ++day) {
        std::vector<MatrixXd> ref_parts;
        long n1 = 0;
        for (int b = day - window; b < day; ++b) {
            ref_parts.push_back(complete_rows(b));
            n1 += ref_parts.back().rows();
        }
        MatrixXd cur = complete_rows(day);
        const long n2 = cur.rows();
        if (n1 < p + 2 || n2 < 2) continue;

        MatrixXd ref(n1, p);
        long at = 0;
        for (const auto& part : ref_parts) {
            ref.middleRows(at, part.rows()) = part;
            at += part.rows();
        }

        VectorXd m1 = ref.colwise().mean();
        VectorXd m2 = cur.colwise().mean();
        MatrixXd d1 = ref.rowwise() - m1.transpose();
        MatrixXd d2 = cur.rowwise() - m2.transpose();
        MatrixXd pooled =
            (d1.transpose() * d1 + d2.transpose() * d2) / static_cast<double>(n1 + n2 - 2);

        Eigen::LLT<MatrixXd> llt(pooled);
        if (llt.info() != Eigen::Success) {
            // ridge fallback keeps ill-conditioned days testable
            pooled += (1e-6 * pooled.trace() / p + 1e-12) * MatrixXd::Identity(p, p);
            llt.compute(pooled);
            if (llt.info() != Eigen::Success) continue;
        }
        VectorXd diff = m2 - m1;
        const double t2 = static_cast<double>(n1) * n2 / (n1 + n2) *
                          diff.dot(llt.solve(diff));

        const double df2 = static_cast<double>(n1 + n2 - p - 1);
        if (df2 <= 0.0) continue;
        boost::math::fisher_f_distribution<double> fdist(p, df2);
        const double limit = p * static_cast<double>(n1 + n2 - 2) / df2 *
                             boost::math::quantile(fdist, 1.0 - alpha);

        out.stat[day] = t2;
        out.limit[day] = limit;
        if (t2 > limit) out.flagged_days.push_back(day + 1);
    }
    return out;
}

DetectionScore score_detection(const std::vector<int>& new_regime_days,
                               int change_after_day, int n_days, int grace) {
    DetectionScore out;
    const int true_day = change_after_day > 0 ? change_after_day + 1 : 0;
    for (int d = 2; d <= n_days; ++d)
        if (true_day == 0 || d < true_day || d > true_day + grace) ++out.n_eligible;
    for (int d : new_regime_days) {
        if (true_day > 0 && d == true_day)
            out.detected = true;
        else if (true_day == 0 || d < true_day || d > true_day + grace)
            ++out.n_false;
    }
    out.fpr = out.n_eligible > 0
                  ? static_cast<double>(out.n_false) / out.n_eligible
                  : 0.0;
    return out;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
    std::vector<BenchRow> rows;
    for (const auto& scen : cfg.scenarios) {
        for (int rep = 0; rep < cfg.n_reps; ++rep) {
            const std::uint64_t rep_seed =
                mix_seed(cfg.seed, name_tag(scen) * 1000 + rep);
            ScenarioData data =
                generate_scenario(scen, rep_seed, cfg.n_days, cfg.rows_per_day);

            BenchRow row;
            row.scenario = scen;
            row.rep = rep;
            row.change_after_day = data.change_after_day;

            HotellingScan ht =
                hotelling_scan(data.stream, cfg.ht2_window, cfg.ht2_alpha);
            DetectionScore hts = score_detection(
                ht.flagged_days, data.change_after_day, cfg.n_days);
            row.ht2_detected = hts.detected;
            row.ht2_fpr = hts.fpr;

            DataStream model_stream = data.stream;
            add_missingness_indicators(model_stream);
            std::vector<std::string> warnings;
            drop_zero_variance(model_stream, warnings);

            SamplerConfig scfg = cfg.sampler;
            scfg.seed = mix_seed(rep_seed, 0xabcdULL);
            Sampler sampler(model_stream, scfg);
            ChainResult res = sampler.run();
            DetectionScore ms = score_detection(
                res.changepoints, data.change_after_day, cfg.n_days);
            row.model_detected = ms.detected;
            row.model_fpr = ms.fpr;
            row.model_seconds = res.seconds;
            row.model_regimes = res.map_phi.size() > 0
                                    ? res.map_phi[res.map_phi.size() - 1] + 1
                                    : 1;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream f(path);
    if (!f) throw error("cannot write " + path);
    f << std::setprecision(17);
    f << "scenario,rep,change_after_day,model_detected,model_fpr,model_seconds,"
         "model_regimes,ht2_detected,ht2_fpr\n";
    for (const auto& r : rows)
        f << r.scenario << "," << r.rep << "," << r.change_after_day << ","
          << (r.model_detected ? 1 : 0) << "," << r.model_fpr << ","
          << r.model_seconds << "," << r.model_regimes << ","
          << (r.ht2_detected ? 1 : 0) << "," << r.ht2_fpr << "\n";
}

}  // namespace dw
