#include "driftwatch/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dw {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_number(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw error("invalid numeric value '" + s + "' for " + what);
    }
}

std::string format_level(double v) {
    char buf[32];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    } else {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
    }
    return buf;
}

}  // namespace

std::string kind_name(VariableKind k) {
    switch (k) {
        case VariableKind::continuous: return "continuous";
        case VariableKind::binary: return "binary";
        case VariableKind::ordinal: return "ordinal";
        case VariableKind::nominal: return "nominal";
    }
    throw error("unreachable variable kind");
}

VariableKind kind_from_name(const std::string& s) {
    if (s == "continuous") return VariableKind::continuous;
    if (s == "binary") return VariableKind::binary;
    if (s == "ordinal") return VariableKind::ordinal;
    if (s == "nominal") return VariableKind::nominal;
    throw error("unknown variable kind '" + s + "'");
}

int DataStream::var_index(const std::string& name) const {
    for (int j = 0; j < n_vars(); ++j)
        if (variables[j].name == name) return j;
    return -1;
}

std::vector<VariableSpec> parse_variable_specs(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw error(std::string("variable spec is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw error("variable spec must be a JSON array");

    std::vector<VariableSpec> specs;
    std::set<std::string> seen;
    for (const auto& item : doc) {
        if (!item.is_object()) throw error("variable spec entries must be objects");
        VariableSpec v;
        if (!item.contains("name") || !item["name"].is_string())
            throw error("variable spec entry missing string 'name'");
        v.name = item["name"].get<std::string>();
        if (v.name.empty()) throw error("variable name must be nonempty");
        if (v.name == "day") throw error("'day' is reserved and cannot be a variable name");
        if (!seen.insert(v.name).second)
            throw error("duplicate variable name '" + v.name + "'");
        if (!item.contains("kind") || !item["kind"].is_string())
            throw error("variable '" + v.name + "' missing string 'kind'");
        v.kind = kind_from_name(item["kind"].get<std::string>());
        if (item.contains("indicator_for"))
            v.indicator_for = item["indicator_for"].get<std::string>();

        switch (v.kind) {
            case VariableKind::continuous: {
                if (item.contains("lower")) v.lower = item["lower"].get<double>();
                if (item.contains("upper")) v.upper = item["upper"].get<double>();
                if (!(v.lower < v.upper))
                    throw error("variable '" + v.name + "': lower bound must be below upper");
                break;
            }
            case VariableKind::binary: {
                v.levels = {"0", "1"};
                if (item.contains("levels")) {
                    v.levels = item["levels"].get<std::vector<std::string>>();
                    if (v.levels.size() != 2)
                        throw error("binary variable '" + v.name + "' needs exactly 2 levels");
                }
                break;
            }
            case VariableKind::ordinal: {
                if (!item.contains("levels"))
                    throw error("ordinal variable '" + v.name + "' needs numeric levels");
                v.ordinal_levels = item["levels"].get<std::vector<double>>();
                if (v.ordinal_levels.size() < 2)
                    throw error("ordinal variable '" + v.name + "' needs at least 2 levels");
                for (size_t l = 1; l < v.ordinal_levels.size(); ++l)
                    if (!(v.ordinal_levels[l - 1] < v.ordinal_levels[l]))
                        throw error("ordinal variable '" + v.name +
                                    "' levels must be strictly increasing");
                break;
            }
            case VariableKind::nominal: {
                if (!item.contains("levels"))
                    throw error("nominal variable '" + v.name + "' needs levels");
                v.levels = item["levels"].get<std::vector<std::string>>();
                if (v.levels.size() < 2)
                    throw error("nominal variable '" + v.name + "' needs at least 2 levels");
                std::set<std::string> lv(v.levels.begin(), v.levels.end());
                if (lv.size() != v.levels.size())
                    throw error("nominal variable '" + v.name + "' has duplicate levels");
                break;
            }
        }
        specs.push_back(std::move(v));
    }
    if (specs.empty()) throw error("variable spec declares no variables");
    return specs;
}

std::vector<VariableSpec> load_variable_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open variable spec file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_variable_specs(ss.str());
}

std::string variable_specs_to_json(const std::vector<VariableSpec>& specs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : specs) {
        nlohmann::json item;
        item["name"] = v.name;
        item["kind"] = kind_name(v.kind);
        switch (v.kind) {
            case VariableKind::continuous:
                if (std::isfinite(v.lower)) item["lower"] = v.lower;
                if (std::isfinite(v.upper)) item["upper"] = v.upper;
                break;
            case VariableKind::binary:
            case VariableKind::nominal:
                item["levels"] = v.levels;
                break;
            case VariableKind::ordinal:
                item["levels"] = v.ordinal_levels;
                break;
        }
        if (!v.indicator_for.empty()) item["indicator_for"] = v.indicator_for;
        arr.push_back(std::move(item));
    }
    return arr.dump(2);
}

namespace {

// parse one observed cell; row_no is 1-based data row for error messages
double parse_cell(const VariableSpec& v, const std::string& field, long row_no) {
    if (field.empty()) return kNaN;
    switch (v.kind) {
        case VariableKind::continuous: {
            double x = parse_number(field, "variable '" + v.name + "' at row " +
                                               std::to_string(row_no));
            if (x < v.lower - 1e-9 || x > v.upper + 1e-9)
                throw error("variable '" + v.name + "' at row " + std::to_string(row_no) +
                            ": value " + field + " outside declared bounds");
            return std::clamp(x, v.lower, v.upper);
        }
        case VariableKind::binary: {
            for (int l = 0; l < 2; ++l)
                if (field == v.levels[l]) return l;
            throw error("variable '" + v.name + "' at row " + std::to_string(row_no) +
                        ": unknown level '" + field + "'");
        }
        case VariableKind::ordinal: {
            double x = parse_number(field, "variable '" + v.name + "' at row " +
                                               std::to_string(row_no));
            for (double d : v.ordinal_levels)
                if (std::abs(x - d) <= 1e-9) return d;
            throw error("variable '" + v.name + "' at row " + std::to_string(row_no) +
                        ": value " + field + " is not a declared level");
        }
        case VariableKind::nominal: {
            for (size_t l = 0; l < v.levels.size(); ++l)
                if (field == v.levels[l]) return static_cast<double>(l);
            throw error("variable '" + v.name + "' at row " + std::to_string(row_no) +
                        ": unknown level '" + field + "'");
        }
    }
    throw error("unreachable cell kind");
}

std::string format_cell(const VariableSpec& v, double x) {
    if (is_missing(x)) return "";
    switch (v.kind) {
        case VariableKind::continuous: {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", x);
            return buf;
        }
        case VariableKind::binary:
            return v.levels[static_cast<int>(x) != 0 ? 1 : 0];
        case VariableKind::ordinal:
            return format_level(x);
        case VariableKind::nominal:
            return v.levels[static_cast<size_t>(x)];
    }
    throw error("unreachable cell kind");
}

}  // namespace

DataStream read_csv_stream(const std::string& csv_path,
                           const std::vector<VariableSpec>& specs) {
    std::ifstream in(csv_path);
    if (!in) throw error("cannot open data file '" + csv_path + "'");

    std::string line;
    if (!std::getline(in, line)) throw error("data file '" + csv_path + "' is empty");
    std::vector<std::string> header = split_csv_line(line);

    int day_col = -1;
    std::vector<int> var_of_col(header.size(), -1);
    std::vector<bool> var_seen(specs.size(), false);
    for (size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "day") {
            if (day_col >= 0) throw error("duplicate 'day' column");
            day_col = static_cast<int>(c);
            continue;
        }
        int j = -1;
        for (size_t k = 0; k < specs.size(); ++k)
            if (specs[k].name == header[c]) { j = static_cast<int>(k); break; }
        if (j < 0) throw error("undeclared column '" + header[c] + "' in data file");
        if (var_seen[j]) throw error("duplicate column '" + header[c] + "' in data file");
        var_seen[j] = true;
        var_of_col[c] = j;
    }
    if (day_col < 0) throw error("data file is missing the 'day' column");
    for (size_t k = 0; k < specs.size(); ++k)
        if (!var_seen[k]) throw error("data file is missing column '" + specs[k].name + "'");

    DataStream stream;
    stream.variables = specs;
    const int J = static_cast<int>(specs.size());

    std::vector<std::vector<double>> rows;  // flat rows for the current day
    long cur_day = 0;
    bool have_day = false;
    long row_no = 0;

    auto flush_day = [&]() {
        if (rows.empty()) return;
        DayBatch b;
        b.day = cur_day;
        b.values.resize(static_cast<long>(rows.size()), J);
        for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < J; ++j) b.values(static_cast<long>(i), j) = rows[i][j];
        stream.days.push_back(std::move(b));
        rows.clear();
    };

    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row_no;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw error("row " + std::to_string(row_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
        if (fields[day_col].empty())
            throw error("row " + std::to_string(row_no) + ": missing day value");
        double dv = parse_number(fields[day_col], "'day' at row " + std::to_string(row_no));
        long day = static_cast<long>(dv);
        if (static_cast<double>(day) != dv)
            throw error("row " + std::to_string(row_no) + ": day must be an integer");
        if (have_day && day < cur_day)
            throw error("row " + std::to_string(row_no) + ": day values must be non-decreasing");
        if (!have_day || day != cur_day) {
            flush_day();
            cur_day = day;
            have_day = true;
        }
        std::vector<double> row(J, kNaN);
        for (size_t c = 0; c < fields.size(); ++c) {
            int j = var_of_col[c];
            if (j < 0) continue;
            row[j] = parse_cell(specs[j], fields[c], row_no);
        }
        rows.push_back(std::move(row));
    }
    flush_day();
    if (stream.days.empty()) throw error("data file '" + csv_path + "' has no data rows");
    return stream;
}

void write_csv_stream(const std::string& csv_path, const DataStream& stream) {
    std::ofstream out(csv_path);
    if (!out) throw error("cannot write data file '" + csv_path + "'");
    out << "day";
    for (const auto& v : stream.variables) out << ',' << v.name;
    out << '\n';
    for (const auto& d : stream.days) {
        for (long i = 0; i < d.values.rows(); ++i) {
            out << d.day;
            for (int j = 0; j < stream.n_vars(); ++j)
                out << ',' << format_cell(stream.variables[j], d.values(i, j));
            out << '\n';
        }
    }
    if (!out) throw error("failed while writing '" + csv_path + "'");
}

int add_missingness_indicators(DataStream& stream) {
    const int J = stream.n_vars();
    std::vector<int> with_missing;
    for (int j = 0; j < J; ++j) {
        if (stream.variables[j].is_indicator()) continue;
        bool any = false;
        for (const auto& d : stream.days)
            if (d.values.col(j).array().isNaN().any()) { any = true; break; }
        if (any) with_missing.push_back(j);
    }
    for (int j : with_missing) {
        VariableSpec ind;
        ind.name = stream.variables[j].name + "NA";
        ind.kind = VariableKind::binary;
        ind.levels = {"0", "1"};
        ind.indicator_for = stream.variables[j].name;
        if (stream.var_index(ind.name) >= 0)
            throw error("indicator name collision: '" + ind.name + "' already declared");
        stream.variables.push_back(ind);
        for (auto& d : stream.days) {
            d.values.conservativeResize(Eigen::NoChange, d.values.cols() + 1);
            long c = d.values.cols() - 1;
            for (long i = 0; i < d.values.rows(); ++i)
                d.values(i, c) = is_missing(d.values(i, j)) ? 1.0 : 0.0;
        }
    }
    return static_cast<int>(with_missing.size());
}

int drop_zero_variance(DataStream& stream, std::vector<std::string>& warnings) {
    const int J = stream.n_vars();
    std::vector<bool> drop(J, false);
    for (int j = 0; j < J; ++j) {
        long n = 0;
        double mean = 0.0, m2 = 0.0;
        for (const auto& d : stream.days) {
            for (long i = 0; i < d.values.rows(); ++i) {
                double x = d.values(i, j);
                if (is_missing(x)) continue;
                ++n;
                double delta = x - mean;
                mean += delta / static_cast<double>(n);
                m2 += delta * (x - mean);
            }
        }
        if (n == 0) {
            drop[j] = true;
            warnings.push_back("dropping column '" + stream.variables[j].name +
                               "': no observed values");
        } else if (n > 0 && m2 / static_cast<double>(n) < 1e-12) {
            drop[j] = true;
            warnings.push_back("dropping column '" + stream.variables[j].name +
                               "': zero variance");
        }
    }
    std::vector<int> keep;
    for (int j = 0; j < J; ++j)
        if (!drop[j]) keep.push_back(j);
    if (static_cast<int>(keep.size()) == J) return 0;

    std::vector<VariableSpec> vars;
    for (int j : keep) vars.push_back(stream.variables[j]);
    for (auto& d : stream.days) {
        MatrixXd m(d.values.rows(), static_cast<long>(keep.size()));
        for (size_t c = 0; c < keep.size(); ++c) m.col(static_cast<long>(c)) = d.values.col(keep[c]);
        d.values = std::move(m);
    }
    stream.variables = std::move(vars);
    return J - static_cast<int>(keep.size());
}

double BoxCoxTransform::apply(double y) const {
    double s = y + shift;
    if (s <= 0.0) throw error("Box-Cox input not positive after shift");
    if (std::abs(lambda) < 1e-9) return std::log(s);
    return (std::pow(s, lambda) - 1.0) / lambda;
}

double BoxCoxTransform::invert(double x) const {
    double s;
    if (std::abs(lambda) < 1e-9) {
        s = std::exp(x);
    } else {
        double base = lambda * x + 1.0;
        if (base <= 0.0) throw error("Box-Cox inverse out of range");
        s = std::pow(base, 1.0 / lambda);
    }
    return s - shift;
}

namespace {

// coefficient of variation of sd_h / mean_h^(1-lambda) across day groups
double guerrero_cv(const std::vector<std::vector<double>>& groups, double lambda) {
    std::vector<double> ratio;
    for (const auto& g : groups) {
        if (g.size() < 2) continue;
        double n = static_cast<double>(g.size());
        double mean = 0.0;
        for (double x : g) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : g) ss += sq(x - mean);
        double sd = std::sqrt(ss / (n - 1.0));
        ratio.push_back(sd / std::pow(mean, 1.0 - lambda));
    }
    if (ratio.size() < 2) throw error("Box-Cox selection needs at least 2 usable day groups");
    double n = static_cast<double>(ratio.size());
    double mean = 0.0;
    for (double r : ratio) mean += r;
    mean /= n;
    if (mean <= 0.0) return kInf;
    double ss = 0.0;
    for (double r : ratio) ss += sq(r - mean);
    return std::sqrt(ss / (n - 1.0)) / mean;
}

}  // namespace

double guerrero_lambda(const std::vector<std::vector<double>>& day_groups,
                       double lo, double hi) {
    for (const auto& g : day_groups)
        for (double x : g)
            if (x <= 0.0) throw error("Box-Cox selection needs positive values");
    // coarse grid, then golden-section polish around the best cell
    const int n_grid = 81;
    double best = lo, best_cv = kInf;
    for (int i = 0; i < n_grid; ++i) {
        double lam = lo + (hi - lo) * i / (n_grid - 1.0);
        double cv = guerrero_cv(day_groups, lam);
        if (cv < best_cv) { best_cv = cv; best = lam; }
    }
    double step = (hi - lo) / (n_grid - 1.0);
    double a = std::max(lo, best - step), b = std::min(hi, best + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = guerrero_cv(day_groups, c), fd = guerrero_cv(day_groups, d);
    for (int it = 0; it < 60 && (b - a) > 1e-7; ++it) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - gr * (b - a);
            fc = guerrero_cv(day_groups, c);
        } else {
            a = c; c = d; fc = fd;
            d = a + gr * (b - a);
            fd = guerrero_cv(day_groups, d);
        }
    }
    return 0.5 * (a + b);
}

std::vector<std::optional<BoxCoxTransform>> apply_boxcox(DataStream& stream) {
    std::vector<std::optional<BoxCoxTransform>> out(stream.n_vars());
    for (int j = 0; j < stream.n_vars(); ++j) {
        const VariableSpec& v = stream.variables[j];
        if (v.kind != VariableKind::continuous || v.is_indicator()) continue;

        double min_obs = kInf;
        long n_obs = 0;
        for (const auto& d : stream.days)
            for (long i = 0; i < d.values.rows(); ++i) {
                double x = d.values(i, j);
                if (is_missing(x)) continue;
                min_obs = std::min(min_obs, x);
                ++n_obs;
            }
        if (n_obs < 4) continue;

        BoxCoxTransform t;
        t.shift = min_obs <= 0.0 ? 1.0 - min_obs : 0.0;
        std::vector<std::vector<double>> groups;
        for (const auto& d : stream.days) {
            std::vector<double> g;
            for (long i = 0; i < d.values.rows(); ++i) {
                double x = d.values(i, j);
                if (!is_missing(x)) g.push_back(x + t.shift);
            }
            if (g.size() >= 2) groups.push_back(std::move(g));
        }
        if (groups.size() < 2) continue;
        t.lambda = guerrero_lambda(groups);

        for (auto& d : stream.days)
            for (long i = 0; i < d.values.rows(); ++i) {
                double& x = d.values(i, j);
                if (!is_missing(x)) x = t.apply(x);
            }
        VariableSpec& vv = stream.variables[j];
        vv.lower = (vv.lower + t.shift > 0.0 && std::isfinite(vv.lower)) ? t.apply(vv.lower) : -kInf;
        vv.upper = std::isfinite(vv.upper) ? t.apply(vv.upper) : kInf;
        out[j] = t;
    }
    return out;
}

LatentLayout LatentLayout::build(const std::vector<VariableSpec>& specs) {
    LatentLayout layout;
    int off = 0;
    for (size_t j = 0; j < specs.size(); ++j) {
        LatentBlock b;
        b.var = static_cast<int>(j);
        b.offset = off;
        b.width = specs[j].kind == VariableKind::nominal ? specs[j].n_levels() : 1;
        off += b.width;
        layout.blocks.push_back(b);
    }
    layout.dim = off;
    return layout;
}

void latent_interval(const VariableSpec& spec, double observed, double* lo, double* hi) {
    switch (spec.kind) {
        case VariableKind::continuous: {
            if (std::isfinite(spec.lower) && observed <= spec.lower) {
                *lo = -kInf;
                *hi = spec.lower;
            } else if (std::isfinite(spec.upper) && observed >= spec.upper) {
                *lo = spec.upper;
                *hi = kInf;
            } else {
                *lo = *hi = observed;
            }
            return;
        }
        case VariableKind::binary: {
            if (observed != 0.0) {
                *lo = 0.0;
                *hi = kInf;
            } else {
                *lo = -kInf;
                *hi = 0.0;
            }
            return;
        }
        case VariableKind::ordinal: {
            const auto& d = spec.ordinal_levels;
            const int L = static_cast<int>(d.size());
            int l = -1;
            for (int k = 0; k < L; ++k)
                if (std::abs(observed - d[k]) <= 1e-9) { l = k; break; }
            if (l < 0) throw error("ordinal value is not a declared level");
            *lo = l == 0 ? -kInf : d[l - 1];
            *hi = l == L - 1 ? kInf : d[l];
            return;
        }
        case VariableKind::nominal:
            throw error("nominal variables have no scalar latent interval");
    }
    throw error("unreachable kind in latent_interval");
}

std::vector<MatrixXd> init_latent(const DataStream& stream, const LatentLayout& layout) {
    std::vector<MatrixXd> z;
    z.reserve(stream.days.size());
    for (const auto& d : stream.days) {
        MatrixXd m = MatrixXd::Zero(d.values.rows(), layout.dim);
        for (const auto& b : layout.blocks) {
            const VariableSpec& v = stream.variables[b.var];
            for (long i = 0; i < d.values.rows(); ++i) {
                double y = d.values(i, b.var);
                if (is_missing(y)) continue;  // keep zeros
                switch (v.kind) {
                    case VariableKind::continuous:
                        m(i, b.offset) = y;
                        break;
                    case VariableKind::binary:
                        m(i, b.offset) = y != 0.0 ? 0.5 : -0.5;
                        break;
                    case VariableKind::ordinal: {
                        const auto& dl = v.ordinal_levels;
                        const int L = static_cast<int>(dl.size());
                        int l = 0;
                        for (int k = 0; k < L; ++k)
                            if (std::abs(y - dl[k]) <= 1e-9) { l = k; break; }
                        double val;
                        if (l == 0)
                            val = dl[0] - 0.5;
                        else if (l == L - 1)
                            val = dl[L - 2] + 0.5;
                        else
                            val = 0.5 * (dl[l - 1] + dl[l]);
                        m(i, b.offset) = val;
                        break;
                    }
                    case VariableKind::nominal: {
                        int l = static_cast<int>(y);
                        for (int k = 0; k < b.width; ++k)
                            m(i, b.offset + k) = k == l ? 1.0 : -1.0;
                        break;
                    }
                }
            }
        }
        z.push_back(std::move(m));
    }
    return z;
}

}  // namespace dw
