#include "d3ro/model_ir.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace d3ro {

namespace {

void merge_terms(std::vector<Term>& terms) {
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < terms.size();) {
        Term t = terms[i++];
        while (i < terms.size() && terms[i].var == t.var) t.coef += terms[i++].coef;
        if (t.coef != 0.0) terms[out++] = t;
    }
    terms.resize(out);
}

}  // namespace

LinExpr& LinExpr::add(int var, double coef) {
    if (coef != 0.0) terms.push_back({var, coef});
    return *this;
}

LinExpr& LinExpr::add(const LinExpr& other, double scale) {
    if (scale == 0.0) return *this;
    for (const auto& t : other.terms) add(t.var, t.coef * scale);
    constant += other.constant * scale;
    return *this;
}

LinExpr& LinExpr::add_constant(double c) {
    constant += c;
    return *this;
}

void LinExpr::compact() { merge_terms(terms); }

int ModelIR::add_var(std::string name, double lower, double upper, VarKind kind) {
    if (kind == VarKind::Binary) {
        lower = std::max(lower, 0.0);
        upper = std::min(upper, 1.0);
    }
    vars.push_back({std::move(name), lower, upper, kind});
    obj.push_back(0.0);
    return num_vars() - 1;
}

int ModelIR::add_binary(std::string name) { return add_var(std::move(name), 0.0, 1.0, VarKind::Binary); }

int ModelIR::add_row(std::string name, std::vector<Term> terms, Sense sense, double rhs) {
    merge_terms(terms);
    rows.push_back({std::move(name), std::move(terms), sense, rhs});
    return num_rows() - 1;
}

int ModelIR::add_row(std::string name, const LinExpr& lhs, Sense sense, double rhs) {
    return add_row(std::move(name), lhs.terms, sense, rhs - lhs.constant);
}

void ModelIR::add_soc(std::string name, std::vector<LinExpr> members, LinExpr bound) {
    for (auto& m : members) m.compact();
    bound.compact();
    socs.push_back({std::move(name), std::move(members), std::move(bound)});
}

void ModelIR::add_obj(int var, double coef) { obj.at(var) += coef; }

void ModelIR::add_obj(const LinExpr& e, double scale) {
    for (const auto& t : e.terms) add_obj(t.var, t.coef * scale);
    obj_constant += e.constant * scale;
}

bool ModelIR::has_binaries() const {
    return std::any_of(vars.begin(), vars.end(), [](const Variable& v) { return v.kind == VarKind::Binary; });
}

std::vector<int> ModelIR::binaries() const {
    std::vector<int> out;
    for (int j = 0; j < num_vars(); ++j)
        if (vars[j].kind == VarKind::Binary) out.push_back(j);
    return out;
}

void ModelIR::validate() const {
    const int n = num_vars();
    if (static_cast<int>(obj.size()) != n) throw std::invalid_argument("objective size mismatch");
    for (const auto& v : vars) {
        if (std::isnan(v.lower) || std::isnan(v.upper) || v.lower > v.upper)
            throw std::invalid_argument(fmt::format("variable {} has crossed bounds", v.name));
    }
    auto check = [n](const std::vector<Term>& ts, const std::string& where) {
        for (const auto& t : ts)
            if (t.var < 0 || t.var >= n || !std::isfinite(t.coef))
                throw std::invalid_argument(fmt::format("bad term in {}", where));
    };
    for (const auto& r : rows) {
        check(r.terms, r.name);
        if (std::isnan(r.rhs)) throw std::invalid_argument(fmt::format("row {} has NaN rhs", r.name));
    }
    for (const auto& s : socs) {
        for (const auto& m : s.members) check(m.terms, s.name);
        check(s.bound.terms, s.name);
    }
}

double ModelIR::objective_value(const std::vector<double>& x) const {
    double v = obj_constant;
    for (int j = 0; j < num_vars(); ++j) v += obj[j] * x[j];
    return v;
}

double ModelIR::row_activity(int r, const std::vector<double>& x) const {
    double a = 0.0;
    for (const auto& t : rows[r].terms) a += t.coef * x[t.var];
    return a;
}

double ModelIR::max_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (int j = 0; j < num_vars(); ++j) {
        const auto& v = vars[j];
        if (x[j] < v.lower) worst = std::max(worst, (v.lower - x[j]) / (1.0 + std::abs(v.lower)));
        if (x[j] > v.upper) worst = std::max(worst, (x[j] - v.upper) / (1.0 + std::abs(v.upper)));
    }
    for (int r = 0; r < num_rows(); ++r) {
        const double a = row_activity(r, x);
        const double scale = 1.0 + std::abs(rows[r].rhs);
        double viol = 0.0;
        switch (rows[r].sense) {
            case Sense::LessEqual: viol = a - rows[r].rhs; break;
            case Sense::GreaterEqual: viol = rows[r].rhs - a; break;
            case Sense::Equal: viol = std::abs(a - rows[r].rhs); break;
        }
        worst = std::max(worst, viol / scale);
    }
    return worst;
}

}  // namespace d3ro
