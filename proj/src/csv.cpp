#include "cfdr/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace cfdr {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0;
    size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& cell, int row, int col) {
    const std::string t = trim(cell);
    CFDR_CHECK(!t.empty(), "csv: empty cell at row " << row << ", column " << col + 1);
    const char* begin = t.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    CFDR_CHECK(end == begin + t.size(),
               "csv: non-numeric cell '" << t << "' at row " << row << ", column " << col + 1);
    CFDR_CHECK(std::isfinite(v),
               "csv: non-finite value at row " << row << ", column " << col + 1);
    return v;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Resolves a schema column reference (name or #index, with #a..#b ranges for
// lists) to concrete column indices.
std::vector<int> resolve_ref(const std::string& ref, const std::vector<std::string>& header,
                             int ncols, bool allow_range) {
    const std::string r = trim(ref);
    CFDR_CHECK(!r.empty(), "schema: empty column reference");
    if (r[0] == '#') {
        const size_t dots = r.find("..");
        auto parse_idx = [&](const std::string& s) {
            const std::string body = s[0] == '#' ? s.substr(1) : s;
            char* end = nullptr;
            const long v = std::strtol(body.c_str(), &end, 10);
            CFDR_CHECK(end == body.c_str() + body.size() && v >= 0,
                       "schema: bad column index '" << s << "'");
            CFDR_CHECK(v < ncols, "schema: column index " << v << " out of range, file has "
                                                          << ncols << " columns");
            return static_cast<int>(v);
        };
        if (dots != std::string::npos) {
            CFDR_CHECK(allow_range, "schema: range not allowed here: '" << r << "'");
            const int a = parse_idx(r.substr(0, dots));
            const int b = parse_idx(trim(r.substr(dots + 2)));
            CFDR_CHECK(a <= b, "schema: empty range '" << r << "'");
            std::vector<int> out;
            for (int i = a; i <= b; ++i) out.push_back(i);
            return out;
        }
        return {parse_idx(r)};
    }
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == r) return {static_cast<int>(i)};
    fail("schema: column '" + r + "' not present in the CSV header");
}

std::vector<int> resolve_list(const std::vector<std::string>& refs,
                              const std::vector<std::string>& header, int ncols) {
    std::vector<int> out;
    for (const std::string& ref : refs)
        for (int i : resolve_ref(ref, header, ncols, true)) out.push_back(i);
    return out;
}

}  // namespace

Schema Schema::standard(OutcomeKind kind) {
    Schema s;
    s.treatment = "t";
    s.y_factual = "y_f";
    s.y_cfactual = "y_cf";
    s.mu0 = "mu0";
    s.mu1 = "mu1";
    s.randomized = "e";
    s.outcome_kind = kind;
    return s;
}

Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    CFDR_CHECK(in.good(), "schema: cannot open '" << path << "'");
    Schema s;
    bool have_treatment = false;
    bool have_outcome_col = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string body = trim(line);
        // Whole-line comments only; '#' inside a value is a column index.
        if (body.empty() || body[0] == '#') continue;
        const size_t colon = body.find(':');
        CFDR_CHECK(colon != std::string::npos,
                   "schema: line " << lineno << " is not 'key: value': '" << body << "'");
        const std::string key = trim(body.substr(0, colon));
        const std::string val = trim(body.substr(colon + 1));
        CFDR_CHECK(!val.empty(), "schema: line " << lineno << ": empty value for '" << key << "'");
        if (key == "treatment") {
            s.treatment = val;
            have_treatment = true;
        } else if (key == "y_factual") {
            s.y_factual = val;
            have_outcome_col = true;
        } else if (key == "y_cfactual") {
            s.y_cfactual = val;
        } else if (key == "mu0") {
            s.mu0 = val;
        } else if (key == "mu1") {
            s.mu1 = val;
        } else if (key == "randomized") {
            s.randomized = val;
        } else if (key == "covariates") {
            for (const std::string& c : split_line(val, ','))
                if (!trim(c).empty()) s.covariates.push_back(trim(c));
        } else if (key == "binary_covariates") {
            for (const std::string& c : split_line(val, ','))
                if (!trim(c).empty()) s.binary_covariates.push_back(trim(c));
        } else if (key == "outcome") {
            if (val == "continuous")
                s.outcome_kind = OutcomeKind::Continuous;
            else if (val == "binary")
                s.outcome_kind = OutcomeKind::Binary;
            else
                fail("schema: line " + std::to_string(lineno) + ": outcome must be continuous or binary, got '" + val + "'");
        } else if (key == "has_header") {
            if (val == "true")
                s.has_header = true;
            else if (val == "false")
                s.has_header = false;
            else
                fail("schema: line " + std::to_string(lineno) + ": has_header must be true or false");
        } else {
            fail("schema: line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    CFDR_CHECK(have_treatment, "schema: missing required key 'treatment' in '" << path << "'");
    CFDR_CHECK(have_outcome_col, "schema: missing required key 'y_factual' in '" << path << "'");
    return s;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    CFDR_CHECK(in.good(), "csv: cannot open '" << path << "'");

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) lines.push_back(line);
    }
    CFDR_CHECK(!lines.empty(), "csv: '" << path << "' is empty");

    std::vector<std::string> header;
    size_t first_data = 0;
    if (schema.has_header) {
        for (std::string& h : header = split_line(lines[0], ',')) h = trim(h);
        first_data = 1;
    }
    CFDR_CHECK(lines.size() > first_data, "csv: '" << path << "' has no data rows");
    const int ncols = static_cast<int>(split_line(lines[first_data], ',').size());
    if (schema.has_header)
        CFDR_CHECK(static_cast<int>(header.size()) == ncols,
                   "csv: header has " << header.size() << " columns, row 2 has " << ncols);

    const int n = static_cast<int>(lines.size() - first_data);
    std::vector<std::vector<double>> cols(static_cast<size_t>(ncols),
                                          std::vector<double>(static_cast<size_t>(n)));
    for (int r = 0; r < n; ++r) {
        const std::vector<std::string> cells = split_line(lines[first_data + r], ',');
        CFDR_CHECK(static_cast<int>(cells.size()) == ncols,
                   "csv: row " << first_data + r + 1 << " has " << cells.size()
                               << " columns, expected " << ncols);
        for (int c = 0; c < ncols; ++c)
            cols[c][r] = parse_double(cells[c], static_cast<int>(first_data) + r + 1, c);
    }

    auto one = [&](const std::string& ref) {
        const std::vector<int> r = resolve_ref(ref, header, ncols, false);
        return r[0];
    };
    // Optional roles named (not indexed) in the schema are taken when the
    // column exists and skipped otherwise, so one schema covers exports with
    // and without the extra columns.
    auto maybe = [&](const std::string& ref) -> std::optional<int> {
        if (schema.has_header && !ref.empty() && ref[0] != '#' &&
            std::find(header.begin(), header.end(), ref) == header.end())
            return std::nullopt;
        return one(ref);
    };

    std::vector<bool> used(static_cast<size_t>(ncols), false);
    const int c_t = one(schema.treatment);
    used[c_t] = true;
    const int c_yf = one(schema.y_factual);
    used[c_yf] = true;
    std::optional<int> c_ycf, c_mu0, c_mu1, c_e;
    if (schema.y_cfactual && (c_ycf = maybe(*schema.y_cfactual))) used[*c_ycf] = true;
    if (schema.mu0 && (c_mu0 = maybe(*schema.mu0))) used[*c_mu0] = true;
    if (schema.mu1 && (c_mu1 = maybe(*schema.mu1))) used[*c_mu1] = true;
    if (schema.randomized && (c_e = maybe(*schema.randomized))) used[*c_e] = true;

    std::vector<int> cov;
    if (!schema.covariates.empty()) {
        cov = resolve_list(schema.covariates, header, ncols);
    } else {
        for (int c = 0; c < ncols; ++c)
            if (!used[c]) cov.push_back(c);
    }
    CFDR_CHECK(!cov.empty(), "csv: no covariate columns in '" << path << "'");

    Dataset ds;
    ds.x = Tensor(n, static_cast<int>(cov.size()));
    for (int i = 0; i < n; ++i)
        for (size_t j = 0; j < cov.size(); ++j) ds.x.at(i, static_cast<int>(j)) = cols[cov[j]][i];
    ds.t = cols[c_t];
    ds.y_f = cols[c_yf];
    if (c_ycf) ds.y_cf = cols[*c_ycf];
    if (c_mu0) ds.mu0 = cols[*c_mu0];
    if (c_mu1) ds.mu1 = cols[*c_mu1];
    if (c_e) ds.e = cols[*c_e];
    ds.outcome_kind = schema.outcome_kind;

    if (!schema.binary_covariates.empty()) {
        const std::vector<int> bin = resolve_list(schema.binary_covariates, header, ncols);
        ds.x_binary.assign(cov.size(), false);
        for (int b : bin) {
            const auto it = std::find(cov.begin(), cov.end(), b);
            CFDR_CHECK(it != cov.end(),
                       "schema: binary_covariates entry (column " << b << ") is not a covariate");
            ds.x_binary[static_cast<size_t>(it - cov.begin())] = true;
        }
    }

    ds.validate();
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path);
    CFDR_CHECK(out.good(), "csv: cannot write '" << path << "'");

    std::ostringstream head;
    for (int j = 0; j < ds.d(); ++j) head << "x" << j + 1 << ",";
    head << "t,y_f";
    if (ds.y_cf) head << ",y_cf";
    if (ds.mu0) head << ",mu0";
    if (ds.mu1) head << ",mu1";
    if (ds.e) head << ",e";
    out << head.str() << "\n";

    for (int i = 0; i < ds.n(); ++i) {
        std::ostringstream row;
        for (int j = 0; j < ds.d(); ++j) row << fmt(ds.x.at(i, j)) << ",";
        row << fmt(ds.t[i]) << "," << fmt(ds.y_f[i]);
        if (ds.y_cf) row << "," << fmt((*ds.y_cf)[i]);
        if (ds.mu0) row << "," << fmt((*ds.mu0)[i]);
        if (ds.mu1) row << "," << fmt((*ds.mu1)[i]);
        if (ds.e) row << "," << fmt((*ds.e)[i]);
        out << row.str() << "\n";
    }
    CFDR_CHECK(out.good(), "csv: write failed for '" << path << "'");
}

void write_quadruples(const std::vector<Quadruple>& quads, const std::string& path) {
    CFDR_CHECK(!quads.empty(), "quadruples: nothing to write");
    std::ofstream out(path);
    CFDR_CHECK(out.good(), "quadruples: cannot write '" << path << "'");
    const size_t d = quads.front().x.size();
    for (size_t j = 0; j < d; ++j) out << "x" << j + 1 << ",";
    out << "t,y_f,y_cf\n";
    for (const Quadruple& q : quads) {
        CFDR_CHECK(q.x.size() == d, "quadruples: inconsistent covariate width");
        for (double v : q.x) out << fmt(v) << ",";
        out << fmt(q.t) << "," << fmt(q.y_f) << "," << fmt(q.y_cf) << "\n";
    }
    CFDR_CHECK(out.good(), "quadruples: write failed for '" << path << "'");
}

}  // namespace cfdr
