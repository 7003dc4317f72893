#pragma once

// File formats. Every file starts with a "# bnip <kind> v1" comment line;
// further lines starting with '#' are comments. Fields are comma separated
// without quoting. Machine files carry full double precision (%.17g).
//
//   outcomes       id, y, [person_years], x1..xp
//   interventions  id, a, [cost], z1..zq
//   interference   dense n x J numbers, or a triplet table with header
//                  i,j,value (0-based indices, absent entries are zero)
//   effects        unit, total_effect, se, p_one_sided, ci_low, ci_high,
//                  [benefit_cost]

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bnip/effects.hpp"
#include "bnip/netdata.hpp"

namespace bnip::io {

inline constexpr int format_version = 1;

/// 17 significant digits: parses back to the same double.
inline std::string fmt_machine(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Four significant digits for human-readable tables.
inline std::string fmt_human(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string header_line(std::string_view kind, std::string_view extra = {}) {
    std::string h = "# bnip " + std::string(kind) + " v" + std::to_string(format_version);
    if (!extra.empty()) h += " " + std::string(extra);
    return h + "\n";
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw IoError("cannot parse number '" + std::string(s) + "' at " + where);
    return v;
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

struct CsvDocument {
    std::string kind;           // from the version header, empty if absent
    std::string header_extra;   // remainder of the version line
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

/// Parses comment/header lines and the table. `has_header` false treats every
/// data line as a row (dense H).
inline CsvDocument parse_csv(const std::string& text, const std::string& origin, bool has_header) {
    CsvDocument doc;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool first_comment = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (line[0] == '#') {
            if (first_comment && line.rfind("# bnip ", 0) == 0) {
                std::istringstream hs(line.substr(7));
                std::string kind, ver;
                hs >> kind >> ver;
                if (ver != "v" + std::to_string(format_version))
                    throw IoError(origin + ": unsupported format version '" + ver + "'");
                doc.kind = kind;
                std::getline(hs, doc.header_extra);
                const auto b = doc.header_extra.find_first_not_of(' ');
                doc.header_extra = b == std::string::npos ? "" : doc.header_extra.substr(b);
            }
            first_comment = false;
            continue;
        }
        first_comment = false;
        auto fields = split_fields(line);
        if (has_header && doc.columns.empty()) {
            doc.columns = std::move(fields);
            continue;
        }
        const std::size_t expected = has_header ? doc.columns.size()
                                     : doc.rows.empty() ? fields.size()
                                                        : doc.rows.front().size();
        if (fields.size() != expected)
            throw IoError(origin + " line " + std::to_string(lineno) + ": expected " +
                          std::to_string(expected) + " fields, found " +
                          std::to_string(fields.size()));
        doc.rows.push_back(std::move(fields));
        doc.line_numbers.push_back(lineno);
    }
    if (has_header && doc.columns.empty()) throw IoError(origin + ": missing header row");
    return doc;
}

inline void expect_kind(const CsvDocument& doc, std::string_view kind, const std::string& origin) {
    if (!doc.kind.empty() && doc.kind != kind)
        throw IoError(origin + ": expected a '" + std::string(kind) + "' file, found '" + doc.kind +
                      "'");
}

struct OutcomeFile {
    OutcomeTable table;
    std::vector<std::string> ids;
    std::vector<std::string> covariates;
};

struct InterventionFile {
    InterventionTable table;
    std::vector<std::string> ids;
    std::vector<std::string> covariates;
};

namespace detail {

// Shared reader for the two unit tables: id, <primary>, [<optional>], covariates.
struct UnitColumns {
    std::vector<std::string> ids;
    Vector primary;
    std::optional<Vector> optional;
    Matrix x;
    std::vector<std::string> covariates;
};

inline UnitColumns read_units(const std::string& path, std::string_view kind,
                              std::string_view primary, std::string_view optional) {
    const CsvDocument doc = parse_csv(read_text(path), path, true);
    expect_kind(doc, kind, path);
    const auto& cols = doc.columns;
    if (cols.size() < 2 || cols[0] != "id" || cols[1] != primary)
        throw IoError(path + ": header must start with 'id," + std::string(primary) + "'");
    const bool has_opt = cols.size() > 2 && cols[2] == optional;
    const std::size_t first_cov = has_opt ? 3 : 2;
    UnitColumns u;
    u.covariates.assign(cols.begin() + static_cast<std::ptrdiff_t>(first_cov), cols.end());
    const auto m = static_cast<Index>(doc.rows.size());
    u.primary.resize(m);
    if (has_opt) u.optional = Vector(m);
    u.x.resize(m, static_cast<Index>(u.covariates.size()));
    for (Index r = 0; r < m; ++r) {
        const auto& row = doc.rows[static_cast<std::size_t>(r)];
        const std::string where = path + " line " + std::to_string(doc.line_numbers[static_cast<std::size_t>(r)]);
        u.ids.push_back(row[0]);
        u.primary(r) = parse_double(row[1], where);
        // the optional column may be blank or NA for units with missing values
        if (has_opt)
            (*u.optional)(r) = row[2].empty() || row[2] == "NA"
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : parse_double(row[2], where);
        for (std::size_t c = first_cov; c < row.size(); ++c)
            u.x(r, static_cast<Index>(c - first_cov)) = parse_double(row[c], where);
    }
    return u;
}

inline std::string write_units(std::string_view kind, std::string_view primary,
                               std::string_view optional, const std::vector<std::string>& ids,
                               const Vector& prim, const std::optional<Vector>& opt,
                               const Matrix& x, std::vector<std::string> covariates,
                               char cov_prefix) {
    if (covariates.empty())
        for (Index c = 0; c < x.cols(); ++c) covariates.push_back(cov_prefix + std::to_string(c + 1));
    if (static_cast<Index>(covariates.size()) != x.cols())
        throw ValidationError("covariate names do not match the covariate width");
    std::string s = header_line(kind);
    s += "id," + std::string(primary);
    if (opt) s += "," + std::string(optional);
    for (const auto& c : covariates) s += "," + c;
    s += "\n";
    for (Index r = 0; r < prim.size(); ++r) {
        s += ids.empty() ? std::to_string(r) : ids[static_cast<std::size_t>(r)];
        s += "," + fmt_machine(prim(r));
        if (opt) s += "," + (std::isnan((*opt)(r)) ? std::string("NA") : fmt_machine((*opt)(r)));
        for (Index c = 0; c < x.cols(); ++c) s += "," + fmt_machine(x(r, c));
        s += "\n";
    }
    return s;
}

}  // namespace detail

inline OutcomeFile read_outcomes(const std::string& path) {
    auto u = detail::read_units(path, "outcomes", "y", "person_years");
    OutcomeFile f;
    f.table.x = std::move(u.x);
    f.table.y = std::move(u.primary);
    f.table.person_years = std::move(u.optional);
    f.ids = std::move(u.ids);
    f.covariates = std::move(u.covariates);
    return f;
}

inline InterventionFile read_interventions(const std::string& path) {
    auto u = detail::read_units(path, "interventions", "a", "cost");
    InterventionFile f;
    f.table.x = std::move(u.x);
    f.table.a = std::move(u.primary);
    f.table.cost = std::move(u.optional);
    f.ids = std::move(u.ids);
    f.covariates = std::move(u.covariates);
    return f;
}

inline std::string format_outcomes(const OutcomeTable& t, const std::vector<std::string>& ids = {},
                                   const std::vector<std::string>& covariates = {}) {
    return detail::write_units("outcomes", "y", "person_years", ids, t.y, t.person_years, t.x,
                               covariates, 'x');
}

inline std::string format_interventions(const InterventionTable& t,
                                        const std::vector<std::string>& ids = {},
                                        const std::vector<std::string>& covariates = {}) {
    return detail::write_units("interventions", "a", "cost", ids, t.a, t.cost, t.x, covariates,
                               'z');
}

/// Dense or triplet interference map; triplet form is recognised by its
/// i,j,value header and needs the expected dimensions.
inline InterferenceMap read_interference(const std::string& path, Index n, Index units) {
    const std::string text = read_text(path);
    std::istringstream probe(text);
    std::string line;
    bool triplet = false;
    while (std::getline(probe, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        const auto f = split_fields(line);
        triplet = f.size() == 3 && f[0] == "i" && f[1] == "j" && f[2] == "value";
        break;
    }
    InterferenceMap h;
    const CsvDocument doc = parse_csv(text, path, triplet);
    expect_kind(doc, "interference", path);
    if (triplet) {
        if (n < 1 || units < 1)
            throw ValidationError("triplet interference map needs known dimensions");
        h.h = Matrix::Zero(n, units);
        for (std::size_t r = 0; r < doc.rows.size(); ++r) {
            const std::string where = path + " line " + std::to_string(doc.line_numbers[r]);
            const double fi = parse_double(doc.rows[r][0], where);
            const double fj = parse_double(doc.rows[r][1], where);
            const auto i = static_cast<Index>(fi), j = static_cast<Index>(fj);
            if (fi != static_cast<double>(i) || fj != static_cast<double>(j) || i < 0 || i >= n ||
                j < 0 || j >= units)
                throw IoError(where + ": index (" + doc.rows[r][0] + ", " + doc.rows[r][1] +
                              ") outside " + std::to_string(n) + " x " + std::to_string(units));
            h.h(i, j) += parse_double(doc.rows[r][2], where);
        }
        return h;
    }
    const auto rows = static_cast<Index>(doc.rows.size());
    const Index cols = rows > 0 ? static_cast<Index>(doc.rows.front().size()) : 0;
    h.h.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            h.h(r, c) = parse_double(doc.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
                                     path + " line " + std::to_string(doc.line_numbers[static_cast<std::size_t>(r)]));
    if ((n > 0 && rows != n) || (units > 0 && cols != units))
        throw ValidationError("interference map is " + std::to_string(rows) + " x " +
                              std::to_string(cols) + ", expected " + std::to_string(n) + " x " +
                              std::to_string(units));
    return h;
}

inline std::string format_interference_dense(const InterferenceMap& h) {
    std::string s = header_line("interference");
    for (Index r = 0; r < h.n(); ++r) {
        for (Index c = 0; c < h.units(); ++c) {
            if (c) s += ",";
            s += fmt_machine(h.h(r, c));
        }
        s += "\n";
    }
    return s;
}

inline std::string format_interference_triplet(const InterferenceMap& h) {
    std::string s = header_line("interference") + "i,j,value\n";
    for (Index r = 0; r < h.n(); ++r)
        for (Index c = 0; c < h.units(); ++c)
            if (h.h(r, c) != 0.0)
                s += std::to_string(r) + "," + std::to_string(c) + "," + fmt_machine(h.h(r, c)) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Effects

struct EffectsFile {
    EffectTable table;
    std::vector<std::string> ids;
};

inline std::string format_effects(const EffectTable& t, const std::vector<std::string>& ids = {}) {
    std::string s = header_line("effects", "level=" + fmt_machine(t.level));
    s += "unit,total_effect,se,p_one_sided,ci_low,ci_high";
    if (t.benefit_cost) s += ",benefit_cost";
    s += "\n";
    for (Index j = 0; j < t.units(); ++j) {
        s += ids.empty() ? std::to_string(j) : ids[static_cast<std::size_t>(j)];
        for (double v : {t.total_effect(j), t.se(j), t.p_one_sided(j), t.ci_low(j), t.ci_high(j)})
            s += "," + fmt_machine(v);
        if (t.benefit_cost) s += "," + fmt_machine((*t.benefit_cost)(j));
        s += "\n";
    }
    return s;
}

inline EffectsFile parse_effects(const std::string& text, const std::string& origin = "effects") {
    const CsvDocument doc = parse_csv(text, origin, true);
    if (doc.kind != "effects") throw IoError(origin + ": not an effects file");
    EffectsFile f;
    if (doc.header_extra.rfind("level=", 0) != 0) throw IoError(origin + ": missing CI level");
    f.table.level = parse_double(doc.header_extra.substr(6), origin + " header");
    const bool bc = doc.columns.size() == 7;
    if (doc.columns.size() != 6 && !bc) throw IoError(origin + ": unexpected effects columns");
    const auto m = static_cast<Index>(doc.rows.size());
    for (Vector* v : {&f.table.total_effect, &f.table.se, &f.table.p_one_sided, &f.table.ci_low,
                      &f.table.ci_high})
        v->resize(m);
    if (bc) f.table.benefit_cost = Vector(m);
    for (Index j = 0; j < m; ++j) {
        const auto& row = doc.rows[static_cast<std::size_t>(j)];
        const std::string where = origin + " line " + std::to_string(doc.line_numbers[static_cast<std::size_t>(j)]);
        f.ids.push_back(row[0]);
        f.table.total_effect(j) = parse_double(row[1], where);
        f.table.se(j) = parse_double(row[2], where);
        f.table.p_one_sided(j) = parse_double(row[3], where);
        f.table.ci_low(j) = parse_double(row[4], where);
        f.table.ci_high(j) = parse_double(row[5], where);
        if (bc) (*f.table.benefit_cost)(j) = parse_double(row[6], where);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Human tables

/// Fixed-width text table; numbers should already be formatted.
inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size() && c < width.size(); ++c)
            width[c] = std::max(width[c], r[c].size());
    auto line = [&](const std::vector<std::string>& r) {
        std::string s;
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string& v = c < r.size() ? r[c] : std::string();
            s += (c ? "  " : "") + v + std::string(width[c] - v.size(), ' ');
        }
        while (!s.empty() && s.back() == ' ') s.pop_back();
        return s + "\n";
    };
    std::string out = line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (const auto& r : rows) out += line(r);
    return out;
}

}  // namespace bnip::io
