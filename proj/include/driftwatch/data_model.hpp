#ifndef DRIFTWATCH_DATA_MODEL_HPP
#define DRIFTWATCH_DATA_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "driftwatch/common.hpp"

namespace dw {

enum class VariableKind { continuous, binary, ordinal, nominal };

std::string kind_name(VariableKind k);
VariableKind kind_from_name(const std::string& s);

// Declared metadata for one observed column.  Ordinal levels are numeric and
// double as the latent cutpoints; nominal levels are free-form labels mapped
// to a block of latent coordinates scored by argmax.
struct VariableSpec {
    std::string name;
    VariableKind kind = VariableKind::continuous;
    double lower = -kInf;  // continuous censoring bounds
    double upper = kInf;
    std::vector<std::string> levels;        // binary/nominal labels
    std::vector<double> ordinal_levels;     // ordinal numeric levels, ascending
    std::string indicator_for;              // source variable if this is a missingness flag

    bool is_indicator() const { return !indicator_for.empty(); }
    int n_levels() const {
        return kind == VariableKind::ordinal ? static_cast<int>(ordinal_levels.size())
                                             : static_cast<int>(levels.size());
    }
};

// One day's batch of observations.  Cells are doubles: continuous values,
// binary 0/1, ordinal level values, nominal level index; NaN marks missing.
struct DayBatch {
    long day = 0;
    MatrixXd values;
};

struct DataStream {
    std::vector<VariableSpec> variables;
    std::vector<DayBatch> days;

    int n_vars() const { return static_cast<int>(variables.size()); }
    int n_days() const { return static_cast<int>(days.size()); }
    long total_rows() const {
        long n = 0;
        for (const auto& d : days) n += d.values.rows();
        return n;
    }
    int var_index(const std::string& name) const;
};

// ---- ingest ----
std::vector<VariableSpec> parse_variable_specs(const std::string& json_text);
std::vector<VariableSpec> load_variable_specs(const std::string& path);
// serializes specs back to the JSON shape accepted by parse_variable_specs
std::string variable_specs_to_json(const std::vector<VariableSpec>& specs);

// CSV with a header row; a required integer "day" column plus one column per
// declared variable; empty cells are missing.  Rejects undeclared columns,
// out-of-level discrete values (naming variable and row) and decreasing days.
DataStream read_csv_stream(const std::string& csv_path,
                           const std::vector<VariableSpec>& specs);
void write_csv_stream(const std::string& csv_path, const DataStream& stream);

// ---- pipeline stages ----

// Appends one binary column per variable that has at least one missing value
// (named <var>NA, 1 where missing); returns the number added.
int add_missingness_indicators(DataStream& stream);

// Drops columns that are entirely missing or have zero variance on their
// observed values; appends one warning line per dropped column.
int drop_zero_variance(DataStream& stream, std::vector<std::string>& warnings);

// Box-Cox transform with the coefficient-of-variation selection criterion:
// lambda minimizes CV over day groups of sd_h / mean_h^(1-lambda) on the
// shifted positive column.
struct BoxCoxTransform {
    double lambda = 1.0;
    double shift = 0.0;
    double apply(double y) const;
    double invert(double x) const;
};
double guerrero_lambda(const std::vector<std::vector<double>>& day_groups,
                       double lo = -2.0, double hi = 2.0);
// fits and applies the transform in place to every non-indicator continuous
// variable (including its censoring bounds); returns one transform per variable
std::vector<std::optional<BoxCoxTransform>> apply_boxcox(DataStream& stream);

// ---- latent encoding ----

// Latent coordinate layout: one coordinate per continuous/binary/ordinal
// variable and one block of n_levels coordinates per nominal variable.
struct LatentBlock {
    int var = 0;      // index into DataStream::variables
    int offset = 0;   // first latent coordinate
    int width = 1;
};

struct LatentLayout {
    std::vector<LatentBlock> blocks;  // one per variable, in variable order
    int dim = 0;
    static LatentLayout build(const std::vector<VariableSpec>& specs);
};

// Initial latent values consistent with every observation constraint:
// continuous cells take their value (bounds included), binary cells +/-0.5,
// ordinal cells their interval midpoint, nominal blocks +1 at the observed
// level and -1 elsewhere, missing cells 0.
std::vector<MatrixXd> init_latent(const DataStream& stream, const LatentLayout& layout);

// interval consistent with an observed cell value, as [lo, hi] truncation for
// the single-coordinate kinds (continuous returns the degenerate point unless
// censored at a declared bound)
void latent_interval(const VariableSpec& spec, double observed, double* lo, double* hi);

}  // namespace dw

#endif
