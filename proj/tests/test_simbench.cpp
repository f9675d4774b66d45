#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "driftwatch/simbench.hpp"

using namespace dw;

namespace {

struct ColumnSplit {
    double mean_pre = 0, mean_post = 0;
    double var_pre = 0, var_post = 0;
    long n_pre = 0, n_post = 0;
};

ColumnSplit column_split(const ScenarioData& data, int col) {
    ColumnSplit s;
    double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
    for (const auto& day : data.stream.days) {
        const bool post = data.change_after_day > 0 && day.day > data.change_after_day;
        for (long r = 0; r < day.values.rows(); ++r) {
            const double x = day.values(r, col);
            if (is_missing(x)) continue;
            if (post) {
                s2 += x;
                q2 += x * x;
                ++s.n_post;
            } else {
                s1 += x;
                q1 += x * x;
                ++s.n_pre;
            }
        }
    }
    s.mean_pre = s1 / s.n_pre;
    s.var_pre = q1 / s.n_pre - sq(s.mean_pre);
    if (s.n_post > 0) {
        s.mean_post = s2 / s.n_post;
        s.var_post = q2 / s.n_post - sq(s.mean_post);
    }
    return s;
}

double cross_cov(const ScenarioData& data, int c1, int c2, bool post_side) {
    double sx = 0, sy = 0, sxy = 0;
    long n = 0;
    for (const auto& day : data.stream.days) {
        const bool post = data.change_after_day > 0 && day.day > data.change_after_day;
        if (post != post_side) continue;
        for (long r = 0; r < day.values.rows(); ++r) {
            const double x = day.values(r, c1), y = day.values(r, c2);
            if (is_missing(x) || is_missing(y)) continue;
            sx += x;
            sy += y;
            sxy += x * y;
            ++n;
        }
    }
    return sxy / n - (sx / n) * (sy / n);
}

double missing_rate(const ScenarioData& data, int col, bool post_side) {
    long miss = 0, total = 0;
    for (const auto& day : data.stream.days) {
        const bool post = data.change_after_day > 0 && day.day > data.change_after_day;
        if (post != post_side) continue;
        for (long r = 0; r < day.values.rows(); ++r) {
            ++total;
            if (is_missing(day.values(r, col))) ++miss;
        }
    }
    return static_cast<double>(miss) / total;
}

}  // namespace

TEST_CASE("scenario inventory and shapes") {
    auto names = scenario_names();
    CHECK(names.size() == 9);
    CHECK(names[0] == "null");

    for (const auto& name : names) {
        ScenarioData data = generate_scenario(name, 5, 16, 12);
        CHECK(data.stream.n_days() == 16);
        CHECK(data.stream.n_vars() == 10);
        CHECK(data.stream.days[0].values.rows() == 12);
        if (name == "null")
            CHECK(data.change_after_day == 0);
        else
            CHECK(data.change_after_day == 14);
    }

    ScenarioData f = generate_scenario("F", 5, 16, 40);
    CHECK(f.stream.variables[7].kind == VariableKind::binary);
    CHECK(f.stream.variables[8].kind == VariableKind::ordinal);
    CHECK(f.stream.variables[9].kind == VariableKind::nominal);
    std::set<double> bvals, ovals, nvals;
    for (const auto& day : f.stream.days)
        for (long r = 0; r < day.values.rows(); ++r) {
            bvals.insert(day.values(r, 7));
            ovals.insert(day.values(r, 8));
            nvals.insert(day.values(r, 9));
        }
    for (double v : bvals) CHECK((v == 0.0 || v == 1.0));
    for (double v : ovals) CHECK((v == -1.0 || v == 0.0 || v == 1.0));
    for (double v : nvals) CHECK((v == 0.0 || v == 1.0 || v == 2.0));

    CHECK_THROWS_WITH_AS(generate_scenario("Z", 1, 10, 10),
                         doctest::Contains("unknown scenario"), error);

    // determinism: a repeated seed reproduces the stream bit for bit
    ScenarioData a1 = generate_scenario("E", 77, 10, 20);
    ScenarioData a2 = generate_scenario("E", 77, 10, 20);
    for (int t = 0; t < 10; ++t) {
        const MatrixXd &x = a1.stream.days[t].values, &y = a2.stream.days[t].values;
        for (long r = 0; r < x.rows(); ++r)
            for (long c = 0; c < x.cols(); ++c) {
                const bool mx = is_missing(x(r, c)), my = is_missing(y(r, c));
                CHECK(mx == my);
                if (!mx) CHECK(x(r, c) == y(r, c));
            }
    }
}

TEST_CASE("mean step family shifts exactly the two target columns") {
    ScenarioData data = generate_scenario("B", 31, 30, 200);
    ColumnSplit c3 = column_split(data, 2);
    ColumnSplit c4 = column_split(data, 3);
    CHECK(c3.mean_post - c3.mean_pre == doctest::Approx(0.5).epsilon(0.15));
    CHECK(c4.mean_post - c4.mean_pre == doctest::Approx(1.0).epsilon(0.08));
    for (int col : {0, 1, 4, 5, 6, 7, 8, 9}) {
        ColumnSplit cs = column_split(data, col);
        CHECK(std::abs(cs.mean_post - cs.mean_pre) < 0.1);
        CHECK(cs.var_post / cs.var_pre == doctest::Approx(1.0).epsilon(0.12));
    }

    // the discretized variant carries the same step on its continuous pair
    ScenarioData h = generate_scenario("H", 37, 30, 200);
    ColumnSplit h3 = column_split(h, 2);
    ColumnSplit h4 = column_split(h, 3);
    CHECK(h3.mean_post - h3.mean_pre == doctest::Approx(0.5).epsilon(0.15));
    CHECK(h4.mean_post - h4.mean_pre == doctest::Approx(1.0).epsilon(0.08));
    CHECK(missing_rate(h, 4, false) == doctest::Approx(0.10).epsilon(0.25));
    CHECK(missing_rate(h, 4, true) == doctest::Approx(0.10).epsilon(0.25));
}

TEST_CASE("cluster flip keeps margins but reverses the pairing") {
    ScenarioData data = generate_scenario("C", 32, 30, 400);
    ColumnSplit c3 = column_split(data, 2);
    ColumnSplit c4 = column_split(data, 3);
    CHECK(std::abs(c3.mean_post - c3.mean_pre) < 0.06);
    CHECK(std::abs(c4.mean_post - c4.mean_pre) < 0.06);
    CHECK(c3.var_pre == doctest::Approx(1.0).epsilon(0.08));
    CHECK(c3.var_post == doctest::Approx(c3.var_pre).epsilon(0.08));
    CHECK(c4.var_post == doctest::Approx(c4.var_pre).epsilon(0.08));

    const double delta2 = 2.25 / 3.25;  // squared cluster offset
    CHECK(cross_cov(data, 2, 3, false) == doctest::Approx(delta2).epsilon(0.1));
    CHECK(cross_cov(data, 2, 3, true) == doctest::Approx(-delta2).epsilon(0.1));
}

TEST_CASE("scale steps grow exactly the two designated variances") {
    ScenarioData a = generate_scenario("A", 33, 30, 200);
    ColumnSplit a3 = column_split(a, 2);
    ColumnSplit a4 = column_split(a, 3);
    CHECK(a3.var_post / a3.var_pre == doctest::Approx(1.5).epsilon(0.12));
    CHECK(a4.var_post / a4.var_pre == doctest::Approx(2.0).epsilon(0.12));
    for (int col : {0, 1, 4, 5, 6, 7, 8, 9}) {
        ColumnSplit cs = column_split(a, col);
        CHECK(cs.var_post / cs.var_pre == doctest::Approx(1.0).epsilon(0.12));
        CHECK(std::abs(cs.mean_post - cs.mean_pre) < 0.1);
    }

    ScenarioData g = generate_scenario("G", 34, 30, 200);
    ColumnSplit g3 = column_split(g, 2);
    ColumnSplit g4 = column_split(g, 3);
    CHECK(g3.var_post / g3.var_pre == doctest::Approx(1.5).epsilon(0.12));
    CHECK(g4.var_post / g4.var_pre == doctest::Approx(2.0).epsilon(0.12));
    CHECK(column_split(g, 0).var_post / column_split(g, 0).var_pre ==
          doctest::Approx(1.0).epsilon(0.12));

    // the bimodal variant keeps its background cluster pair moment matched
    ScenarioData f = generate_scenario("F", 38, 30, 300);
    ColumnSplit f1 = column_split(f, 0);
    ColumnSplit f2 = column_split(f, 1);
    CHECK(std::abs(f1.mean_pre) < 0.06);
    CHECK(std::abs(f1.mean_post) < 0.06);
    CHECK(f1.var_pre == doctest::Approx(1.0).epsilon(0.08));
    CHECK(f1.var_post == doctest::Approx(1.0).epsilon(0.08));
    CHECK(f2.var_post == doctest::Approx(1.0).epsilon(0.08));
    const double delta2 = 2.25 / 3.25;
    CHECK(cross_cov(f, 0, 1, false) == doctest::Approx(delta2).epsilon(0.1));
    CHECK(cross_cov(f, 0, 1, true) == doctest::Approx(delta2).epsilon(0.1));
    ColumnSplit f4 = column_split(f, 3);
    CHECK(f4.var_post / f4.var_pre == doctest::Approx(2.0).epsilon(0.12));
    CHECK(missing_rate(f, 4, false) == doctest::Approx(0.10).epsilon(0.25));
}

TEST_CASE("missingness families move the declared rates") {
    ScenarioData d = generate_scenario("D", 35, 30, 200);
    CHECK(missing_rate(d, 4, false) == doctest::Approx(0.10).epsilon(0.2));
    CHECK(missing_rate(d, 4, true) == doctest::Approx(0.35).epsilon(0.12));
    CHECK(missing_rate(d, 3, false) == 0.0);
    CHECK(missing_rate(d, 3, true) == 0.0);

    // the structure family keeps both marginal rates fixed while the
    // indicator correlation flips sign
    ScenarioData e = generate_scenario("E", 36, 30, 200);
    for (int col : {4, 5}) {
        CHECK(missing_rate(e, col, false) == doctest::Approx(0.15).epsilon(0.15));
        CHECK(missing_rate(e, col, true) == doctest::Approx(0.15).epsilon(0.15));
    }
    CHECK(missing_rate(e, 3, false) == 0.0);

    auto indicator_corr = [&](bool post_side) {
        double s1 = 0, s2 = 0, s12 = 0;
        long n = 0;
        for (const auto& day : e.stream.days) {
            const bool post = day.day > e.change_after_day;
            if (post != post_side) continue;
            for (long r = 0; r < day.values.rows(); ++r) {
                const double i1 = is_missing(day.values(r, 4)) ? 1.0 : 0.0;
                const double i2 = is_missing(day.values(r, 5)) ? 1.0 : 0.0;
                s1 += i1;
                s2 += i2;
                s12 += i1 * i2;
                ++n;
            }
        }
        const double m1 = s1 / n, m2 = s2 / n;
        const double cov = s12 / n - m1 * m2;
        return cov / std::sqrt(m1 * (1 - m1) * m2 * (1 - m2));
    };
    CHECK(indicator_corr(false) > 0.35);
    CHECK(indicator_corr(true) < -0.05);
}

TEST_CASE("detection scores count the true day, grace days, and false flags") {
    // change after day 14: detection means flagging day 15 itself;
    // flags on the two grace days 16 and 17 count neither way
    DetectionScore s1 = score_detection({15}, 14, 30);
    CHECK(s1.detected);
    CHECK(s1.n_false == 0);
    CHECK(s1.n_eligible == 26);
    CHECK(s1.fpr == 0.0);

    DetectionScore s2 = score_detection({5, 15}, 14, 30);
    CHECK(s2.detected);
    CHECK(s2.n_false == 1);
    CHECK(s2.fpr == doctest::Approx(1.0 / 26.0));

    DetectionScore s3 = score_detection({18}, 14, 30);
    CHECK_FALSE(s3.detected);
    CHECK(s3.n_false == 1);

    DetectionScore s4 = score_detection({16, 17}, 14, 30);
    CHECK_FALSE(s4.detected);
    CHECK(s4.n_false == 0);
    CHECK(s4.fpr == 0.0);

    // a detector flagging every candidate day scores FPR exactly one
    std::vector<int> all_days;
    for (int d = 2; d <= 30; ++d) all_days.push_back(d);
    DetectionScore s7 = score_detection(all_days, 14, 30);
    CHECK(s7.detected);
    CHECK(s7.n_false == 26);
    CHECK(s7.fpr == 1.0);

    DetectionScore s5 = score_detection({7}, 0, 30);
    CHECK_FALSE(s5.detected);
    CHECK(s5.n_eligible == 29);
    CHECK(s5.fpr == doctest::Approx(1.0 / 29.0));

    DetectionScore s6 = score_detection({}, 0, 30);
    CHECK_FALSE(s6.detected);
    CHECK(s6.fpr == 0.0);
}

TEST_CASE("the baseline scan is calibrated on stationary streams") {
    long flags = 0, eligible = 0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
        ScenarioData data = generate_scenario("null", 1000 + rep, 30, 50);
        HotellingScan scan = hotelling_scan(data.stream, 3, 0.01);
        flags += static_cast<long>(scan.flagged_days.size());
        for (long i = 0; i < scan.stat.size(); ++i)
            if (!is_missing(scan.stat[i])) ++eligible;
    }
    CHECK(eligible == reps * 27);
    const double rate = static_cast<double>(flags) / eligible;
    const double se = std::sqrt(0.01 * 0.99 / eligible);
    CHECK(std::abs(rate - 0.01) < 3.0 * se + 1e-12);
}

TEST_CASE("the baseline scan sees mean steps but not the cluster flip") {
    int hit_b = 0;
    for (int rep = 0; rep < 6; ++rep) {
        ScenarioData data = generate_scenario("B", 2000 + rep, 30, 50);
        HotellingScan scan = hotelling_scan(data.stream, 3, 0.01);
        DetectionScore sc = score_detection(scan.flagged_days, 14, 30);
        if (sc.detected) ++hit_b;
    }
    CHECK(hit_b >= 5);

    int hit_c = 0;
    for (int rep = 0; rep < 6; ++rep) {
        ScenarioData data = generate_scenario("C", 3000 + rep, 30, 50);
        HotellingScan scan = hotelling_scan(data.stream, 3, 0.01);
        DetectionScore sc = score_detection(scan.flagged_days, 14, 30);
        if (sc.detected) ++hit_c;
    }
    CHECK(hit_c <= 2);
}

TEST_CASE("the scan tolerates missing cells and tiny batches") {
    ScenarioData data = generate_scenario("D", 4, 10, 30);
    HotellingScan scan = hotelling_scan(data.stream, 3, 0.01);
    CHECK(scan.stat.size() == 10);
    CHECK(is_missing(scan.stat[0]));
    CHECK(is_missing(scan.stat[2]));
    CHECK(!is_missing(scan.stat[5]));

    // a stream too thin for the pooled scatter never tests
    ScenarioData tiny = generate_scenario("null", 9, 6, 2);
    HotellingScan s2 = hotelling_scan(tiny.stream, 3, 0.01);
    for (long i = 0; i < s2.stat.size(); ++i) CHECK(is_missing(s2.stat[i]));
    CHECK(s2.flagged_days.empty());
}

TEST_CASE("the benchmark loop produces a scored table") {
    BenchConfig cfg;
    cfg.scenarios = {"null", "B"};
    cfg.n_reps = 1;
    cfg.n_days = 8;
    cfg.rows_per_day = 20;
    cfg.seed = 5;
    cfg.sampler.q = 1;
    cfg.sampler.fix_transition_prob = true;
    cfg.sampler.update_wv = false;
    cfg.sampler.graph_mode = GraphMode::full;
    cfg.sampler.update_graph = false;
    cfg.sampler.n_sweeps = 300;
    cfg.sampler.burn_in = 100;

    std::vector<BenchRow> rows = run_bench(cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].scenario == "null");
    CHECK(rows[1].scenario == "B");
    CHECK(rows[1].change_after_day == 7);
    CHECK(rows[0].model_seconds > 0.0);

    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "dw_bench_test.csv";
    write_bench_csv(path.string(), rows);
    std::ifstream f(path);
    REQUIRE(f.good());
    std::string line;
    int lines = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 3);
    fs::remove(path);
}
