#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "driftwatch/data_model.hpp"
#include "driftwatch/rng.hpp"

using namespace dw;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
    std::string path = std::string("/tmp/dw_dm_") + name;
    std::ofstream out(path);
    out << text;
    return path;
}

const char* kSpecJson = R"([
  {"name": "amount", "kind": "continuous", "lower": 0.0},
  {"name": "flag", "kind": "binary"},
  {"name": "grade", "kind": "ordinal", "levels": [1, 2, 5]},
  {"name": "channel", "kind": "nominal", "levels": ["web", "branch", "phone"]}
])";

const char* kCsv =
    "day,amount,flag,grade,channel\n"
    "1,3.5,1,2,web\n"
    "1,0.0,0,1,branch\n"
    "2,,1,5,phone\n"
    "2,7.25,0,,web\n"
    "3,1.0,1,2,\n";

DataStream make_stream() {
    auto specs = parse_variable_specs(kSpecJson);
    return read_csv_stream(write_temp("basic.csv", kCsv), specs);
}

}  // namespace

TEST_CASE("variable spec parsing and validation") {
    auto specs = parse_variable_specs(kSpecJson);
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].kind == VariableKind::continuous);
    CHECK(specs[0].lower == 0.0);
    CHECK(specs[0].upper == kInf);
    CHECK(specs[1].levels == std::vector<std::string>{"0", "1"});
    CHECK(specs[2].ordinal_levels == std::vector<double>{1, 2, 5});
    CHECK(specs[3].n_levels() == 3);

    CHECK_THROWS_WITH_AS(parse_variable_specs(R"([{"name":"x","kind":"weird"}])"),
                         doctest::Contains("unknown variable kind"), error);
    CHECK_THROWS_WITH_AS(
        parse_variable_specs(R"([{"name":"x","kind":"ordinal","levels":[2,1]}])"),
        doctest::Contains("strictly increasing"), error);
    CHECK_THROWS_WITH_AS(parse_variable_specs(
                             R"([{"name":"x","kind":"binary"},{"name":"x","kind":"binary"}])"),
                         doctest::Contains("duplicate variable name"), error);
    CHECK_THROWS_WITH_AS(parse_variable_specs(R"([{"name":"day","kind":"binary"}])"),
                         doctest::Contains("reserved"), error);
    CHECK_THROWS_WITH_AS(
        parse_variable_specs(R"([{"name":"b","kind":"binary","levels":["a","b","c"]}])"),
        doctest::Contains("exactly 2"), error);
    CHECK_THROWS_WITH_AS(
        parse_variable_specs(R"([{"name":"n","kind":"nominal","levels":["a","a"]}])"),
        doctest::Contains("duplicate levels"), error);
}

TEST_CASE("csv ingest groups days and encodes cells") {
    DataStream s = make_stream();
    REQUIRE(s.n_days() == 3);
    CHECK(s.days[0].day == 1);
    CHECK(s.days[0].values.rows() == 2);
    CHECK(s.days[1].values.rows() == 2);
    CHECK(s.days[2].values.rows() == 1);
    CHECK(s.total_rows() == 5);

    CHECK(s.days[0].values(0, 0) == doctest::Approx(3.5));
    CHECK(s.days[0].values(0, 1) == 1.0);
    CHECK(s.days[0].values(0, 2) == 2.0);   // ordinal stored as level value
    CHECK(s.days[0].values(0, 3) == 0.0);   // nominal stored as level index
    CHECK(s.days[0].values(1, 3) == 1.0);
    CHECK(is_missing(s.days[1].values(0, 0)));
    CHECK(is_missing(s.days[1].values(1, 2)));
    CHECK(is_missing(s.days[2].values(0, 3)));
    CHECK(s.var_index("grade") == 2);
    CHECK(s.var_index("nope") == -1);
}

TEST_CASE("csv ingest rejects malformed input with located errors") {
    auto specs = parse_variable_specs(kSpecJson);
    auto path = [&](const char* name, const std::string& text) {
        return write_temp(name, text);
    };
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("badlvl.csv", "day,amount,flag,grade,channel\n1,1,1,3,web\n"), specs),
        doctest::Contains("variable 'grade' at row 1"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("badnom.csv", "day,amount,flag,grade,channel\n1,1,1,2,mail\n"), specs),
        doctest::Contains("variable 'channel' at row 1"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("neg.csv", "day,amount,flag,grade,channel\n1,-2,1,2,web\n"), specs),
        doctest::Contains("outside declared bounds"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("dayorder.csv",
                             "day,amount,flag,grade,channel\n2,1,1,2,web\n1,1,1,2,web\n"),
                        specs),
        doctest::Contains("non-decreasing"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("extra.csv", "day,amount,flag,grade,channel,zzz\n"), specs),
        doctest::Contains("undeclared column 'zzz'"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("missingcol.csv", "day,amount,flag,grade\n1,1,1,2\n"), specs),
        doctest::Contains("missing column 'channel'"), error);
    CHECK_THROWS_WITH_AS(
        read_csv_stream(path("noday.csv", "amount,flag,grade,channel\n1,1,2,web\n"), specs),
        doctest::Contains("missing the 'day' column"), error);
}

TEST_CASE("csv round trip preserves values and missingness") {
    DataStream s = make_stream();
    std::string path = write_temp("roundtrip.csv", "");
    write_csv_stream(path, s);
    DataStream s2 = read_csv_stream(path, s.variables);
    REQUIRE(s2.n_days() == s.n_days());
    for (int t = 0; t < s.n_days(); ++t) {
        CHECK(s2.days[t].day == s.days[t].day);
        REQUIRE(s2.days[t].values.rows() == s.days[t].values.rows());
        for (long i = 0; i < s.days[t].values.rows(); ++i)
            for (int j = 0; j < s.n_vars(); ++j) {
                double a = s.days[t].values(i, j), b = s2.days[t].values(i, j);
                if (is_missing(a))
                    CHECK(is_missing(b));
                else
                    CHECK(b == doctest::Approx(a).epsilon(1e-12));
            }
    }
}

TEST_CASE("missingness indicators are added only where needed") {
    DataStream s = make_stream();
    int added = add_missingness_indicators(s);
    CHECK(added == 3);  // amount, grade, channel have gaps; flag does not
    REQUIRE(s.n_vars() == 7);
    CHECK(s.variables[4].name == "amountNA");
    CHECK(s.variables[4].kind == VariableKind::binary);
    CHECK(s.variables[4].indicator_for == "amount");
    CHECK(s.var_index("flagNA") == -1);
    CHECK(s.days[1].values(0, 4) == 1.0);  // amount missing on day 2 row 1
    CHECK(s.days[0].values(0, 4) == 0.0);
    CHECK(s.days[1].values(1, 5) == 1.0);  // gradeNA
    CHECK(s.days[2].values(0, 6) == 1.0);  // channelNA
    // indicators never missing
    for (const auto& d : s.days)
        for (long i = 0; i < d.values.rows(); ++i)
            for (int j = 4; j < 7; ++j) CHECK(!is_missing(d.values(i, j)));
}

TEST_CASE("column bookkeeping: 123 raw variables expand to 182 latent coordinates") {
    // 35 continuous + 87 binary + 1 nominal with 33 levels; 27 of the raw
    // columns have gaps, so 27 indicators join and the latent dimension is
    // 35 + 87 + 33 + 27 = 182.
    std::vector<VariableSpec> specs;
    for (int k = 0; k < 35; ++k) {
        VariableSpec v;
        v.name = "c" + std::to_string(k);
        v.kind = VariableKind::continuous;
        specs.push_back(v);
    }
    for (int k = 0; k < 87; ++k) {
        VariableSpec v;
        v.name = "b" + std::to_string(k);
        v.kind = VariableKind::binary;
        v.levels = {"0", "1"};
        specs.push_back(v);
    }
    {
        VariableSpec v;
        v.name = "cat";
        v.kind = VariableKind::nominal;
        for (int l = 0; l < 33; ++l) v.levels.push_back("L" + std::to_string(l));
        specs.push_back(v);
    }
    REQUIRE(specs.size() == 123);

    DataStream s;
    s.variables = specs;
    Rng rng(7);
    for (long day = 1; day <= 2; ++day) {
        DayBatch b;
        b.day = day;
        b.values.resize(3, 123);
        for (long i = 0; i < 3; ++i) {
            for (int j = 0; j < 35; ++j) b.values(i, j) = rng.normal();
            for (int j = 35; j < 122; ++j) b.values(i, j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
            b.values(i, 122) = static_cast<double>(rng.uniform_int(33));
        }
        s.days.push_back(std::move(b));
    }
    // poke one missing cell into the first 27 raw columns
    for (int j = 0; j < 27; ++j) s.days[0].values(0, j) = kNaN;

    int added = add_missingness_indicators(s);
    CHECK(added == 27);
    CHECK(s.n_vars() == 150);
    LatentLayout layout = LatentLayout::build(s.variables);
    CHECK(layout.dim == 182);
    CHECK(layout.blocks[122].width == 33);
    CHECK(layout.blocks[123].width == 1);
    CHECK(layout.blocks.back().offset == 181);
}

TEST_CASE("zero variance columns are dropped with a warning") {
    auto specs = parse_variable_specs(R"([
      {"name": "x", "kind": "continuous"},
      {"name": "k", "kind": "continuous"},
      {"name": "b", "kind": "binary"},
      {"name": "empty", "kind": "continuous"}
    ])");
    std::string csv =
        "day,x,k,b,empty\n"
        "1,0.3,5,1,\n"
        "1,1.2,5,0,\n"
        "2,-0.4,5,1,\n";
    DataStream s = read_csv_stream(write_temp("zv.csv", csv), specs);
    std::vector<std::string> warnings;
    int dropped = drop_zero_variance(s, warnings);
    CHECK(dropped == 2);
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("'k'") != std::string::npos);
    CHECK(warnings[0].find("zero variance") != std::string::npos);
    CHECK(warnings[1].find("'empty'") != std::string::npos);
    CHECK(warnings[1].find("no observed") != std::string::npos);
    REQUIRE(s.n_vars() == 2);
    CHECK(s.variables[0].name == "x");
    CHECK(s.variables[1].name == "b");
    CHECK(s.days[0].values.cols() == 2);
    CHECK(s.days[0].values(1, 0) == doctest::Approx(1.2));
}

namespace {

// independent dense-grid oracle for the variance-stabilizing exponent
double oracle_lambda(const std::vector<std::vector<double>>& groups) {
    double best = 0.0, best_cv = kInf;
    for (int i = 0; i <= 8000; ++i) {
        double lam = -2.0 + 4.0 * i / 8000.0;
        std::vector<double> ratio;
        for (const auto& g : groups) {
            double n = static_cast<double>(g.size());
            double mean = 0.0;
            for (double x : g) mean += x;
            mean /= n;
            double ss = 0.0;
            for (double x : g) ss += (x - mean) * (x - mean);
            double sd = std::sqrt(ss / (n - 1.0));
            ratio.push_back(sd / std::pow(mean, 1.0 - lam));
        }
        double m = 0.0;
        for (double r : ratio) m += r;
        m /= ratio.size();
        double ss = 0.0;
        for (double r : ratio) ss += (r - m) * (r - m);
        double cv = std::sqrt(ss / (ratio.size() - 1.0)) / m;
        if (cv < best_cv) { best_cv = cv; best = lam; }
    }
    return best;
}

}  // namespace

TEST_CASE("variance-stabilizing exponent selection matches dense grid oracle") {
    Rng rng(42);

    // multiplicative noise: sd proportional to mean -> exponent near 0
    std::vector<std::vector<double>> log_groups;
    for (int h = 0; h < 10; ++h) {
        std::vector<double> g;
        double mu = 0.3 * h;
        for (int i = 0; i < 200; ++i) g.push_back(std::exp(mu + 0.4 * rng.normal()));
        log_groups.push_back(std::move(g));
    }
    double lam0 = guerrero_lambda(log_groups);
    CHECK(std::abs(lam0 - oracle_lambda(log_groups)) < 0.01);
    CHECK(std::abs(lam0) < 0.25);

    // additive noise: sd constant while means vary -> exponent near 1
    std::vector<std::vector<double>> lin_groups;
    for (int h = 0; h < 10; ++h) {
        std::vector<double> g;
        double mu = 5.0 + 2.0 * h;
        for (int i = 0; i < 200; ++i) g.push_back(mu + 0.5 * rng.normal());
        lin_groups.push_back(std::move(g));
    }
    double lam1 = guerrero_lambda(lin_groups);
    CHECK(std::abs(lam1 - oracle_lambda(lin_groups)) < 0.01);
    CHECK(std::abs(lam1 - 1.0) < 0.35);
}

TEST_CASE("power transform applies and inverts") {
    BoxCoxTransform t{0.5, 2.0};
    for (double y : {-1.0, 0.0, 3.7, 10.0}) {
        CHECK(t.invert(t.apply(y)) == doctest::Approx(y).epsilon(1e-12));
    }
    BoxCoxTransform logt{0.0, 0.0};
    CHECK(logt.apply(std::exp(2.0)) == doctest::Approx(2.0));
    CHECK(logt.invert(2.0) == doctest::Approx(std::exp(2.0)));
    CHECK_THROWS_AS(logt.apply(-1.0), error);
}

TEST_CASE("stream transform hits continuous columns only and maps bounds") {
    auto specs = parse_variable_specs(R"([
      {"name": "pos", "kind": "continuous", "lower": 0.5, "upper": 100.0},
      {"name": "b", "kind": "binary"}
    ])");
    DataStream s;
    s.variables = specs;
    Rng rng(3);
    for (long day = 1; day <= 6; ++day) {
        DayBatch batch;
        batch.day = day;
        batch.values.resize(30, 2);
        for (long i = 0; i < 30; ++i) {
            batch.values(i, 0) = std::exp(0.2 * day + 0.5 * rng.normal());
            batch.values(i, 1) = rng.uniform() < 0.5 ? 0.0 : 1.0;
        }
        s.days.push_back(std::move(batch));
    }
    DataStream before = s;
    auto transforms = apply_boxcox(s);
    REQUIRE(transforms.size() == 2);
    REQUIRE(transforms[0].has_value());
    CHECK(!transforms[1].has_value());
    const auto& t = *transforms[0];
    CHECK(std::abs(t.lambda) < 0.4);
    // cells transformed consistently, binary untouched
    for (int d = 0; d < 6; ++d)
        for (long i = 0; i < 30; ++i) {
            CHECK(s.days[d].values(i, 0) ==
                  doctest::Approx(t.apply(before.days[d].values(i, 0))).epsilon(1e-12));
            CHECK(s.days[d].values(i, 1) == before.days[d].values(i, 1));
        }
    // censoring bounds ride along monotonically
    CHECK(s.variables[0].lower == doctest::Approx(t.apply(0.5)));
    CHECK(s.variables[0].upper == doctest::Approx(t.apply(100.0)));
    CHECK(s.variables[0].lower < s.variables[0].upper);
}

TEST_CASE("latent intervals per kind") {
    VariableSpec cont;
    cont.kind = VariableKind::continuous;
    cont.lower = 0.0;
    cont.upper = 10.0;
    double lo, hi;
    latent_interval(cont, 3.0, &lo, &hi);
    CHECK(lo == 3.0);
    CHECK(hi == 3.0);
    latent_interval(cont, 0.0, &lo, &hi);
    CHECK(lo == -kInf);
    CHECK(hi == 0.0);
    latent_interval(cont, 10.0, &lo, &hi);
    CHECK(lo == 10.0);
    CHECK(hi == kInf);

    VariableSpec bin;
    bin.kind = VariableKind::binary;
    latent_interval(bin, 1.0, &lo, &hi);
    CHECK(lo == 0.0);
    CHECK(hi == kInf);
    latent_interval(bin, 0.0, &lo, &hi);
    CHECK(lo == -kInf);
    CHECK(hi == 0.0);

    VariableSpec ord;
    ord.kind = VariableKind::ordinal;
    ord.ordinal_levels = {1.0, 2.0, 5.0};
    latent_interval(ord, 1.0, &lo, &hi);
    CHECK(lo == -kInf);
    CHECK(hi == 1.0);
    latent_interval(ord, 2.0, &lo, &hi);
    CHECK(lo == 1.0);
    CHECK(hi == 2.0);
    latent_interval(ord, 5.0, &lo, &hi);
    CHECK(lo == 2.0);
    CHECK(hi == kInf);

    VariableSpec nom;
    nom.kind = VariableKind::nominal;
    nom.levels = {"a", "b"};
    CHECK_THROWS_AS(latent_interval(nom, 0.0, &lo, &hi), error);
}

TEST_CASE("initial latent values satisfy every observation constraint") {
    DataStream s = make_stream();
    add_missingness_indicators(s);
    LatentLayout layout = LatentLayout::build(s.variables);
    CHECK(layout.dim == 4 - 1 + 3 + 3);  // amount,flag,grade scalar + channel(3) + 3 indicators
    auto z = init_latent(s, layout);
    REQUIRE(z.size() == s.days.size());
    for (size_t t = 0; t < z.size(); ++t) {
        REQUIRE(z[t].rows() == s.days[t].values.rows());
        REQUIRE(z[t].cols() == layout.dim);
        for (long i = 0; i < z[t].rows(); ++i) {
            for (const auto& b : layout.blocks) {
                const VariableSpec& v = s.variables[b.var];
                double y = s.days[t].values(i, b.var);
                if (is_missing(y)) continue;
                if (v.kind == VariableKind::nominal) {
                    int want = static_cast<int>(y);
                    int argmax = 0;
                    for (int k = 1; k < b.width; ++k)
                        if (z[t](i, b.offset + k) > z[t](i, b.offset + argmax)) argmax = k;
                    CHECK(argmax == want);
                } else {
                    double lo, hi;
                    latent_interval(v, y, &lo, &hi);
                    CHECK(z[t](i, b.offset) >= lo - 1e-12);
                    CHECK(z[t](i, b.offset) <= hi + 1e-12);
                }
            }
        }
    }
    // continuous observed cells are pinned to their value
    CHECK(z[0](0, 0) == doctest::Approx(3.5));
    // censored-at-lower-bound cell sits at the bound, not below
    CHECK(z[0](1, 0) == doctest::Approx(0.0));
}
