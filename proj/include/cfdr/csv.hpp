#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfdr/dataset.hpp"

namespace cfdr {

// Column-role mapping for CSV ingestion. Columns are referred to by header
// name, or by 0-based index written as #k (usable with headerless files).
//
// Schema file format, one "key: value" pair per line, '#' comments allowed.
// Optional roles referred to by name are skipped when the file lacks the
// column, so one schema covers exports with and without the extra columns.
//   treatment: t             required
//   y_factual: y_f           required
//   y_cfactual: y_cf         optional
//   mu0: mu0                 optional
//   mu1: mu1                 optional
//   randomized: e            optional
//   covariates: x1,x2,#7..#9 optional; default = every unmapped column
//   binary_covariates: x2    optional subset of the covariates
//   outcome: continuous      or "binary"
//   has_header: true         "false" for headerless files (index refs only)
struct Schema {
    std::string treatment;
    std::string y_factual;
    std::optional<std::string> y_cfactual;
    std::optional<std::string> mu0;
    std::optional<std::string> mu1;
    std::optional<std::string> randomized;
    std::vector<std::string> covariates;         // empty = all unmapped columns
    std::vector<std::string> binary_covariates;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    bool has_header = true;

    // Default column names used by the CSV files this library writes.
    static Schema standard(OutcomeKind kind);
};

Schema load_schema(const std::string& path);

Dataset load_csv(const std::string& path, const Schema& schema);

// Writes x1..xd, t, y_f and whichever optional columns the dataset carries,
// with enough digits that a load/write/load round trip is bit-exact.
void write_csv(const Dataset& ds, const std::string& path);

// Generated counterfactual completions, exportable next to their dataset.
struct Quadruple {
    double t = 0.0;
    double y_f = 0.0;
    double y_cf = 0.0;  // generated
    std::vector<double> x;
};

void write_quadruples(const std::vector<Quadruple>& quads, const std::string& path);

}  // namespace cfdr
