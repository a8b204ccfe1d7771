#pragma once

#include <limits>
#include <string>
#include <vector>

namespace d3ro {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class Sense { LessEqual, Equal, GreaterEqual };

struct Term {
    int var;
    double coef;
};

struct LinExpr {
    std::vector<Term> terms;
    double constant = 0.0;

    LinExpr() = default;
    explicit LinExpr(double c) : constant(c) {}

    LinExpr& add(int var, double coef);
    LinExpr& add(const LinExpr& other, double scale = 1.0);
    LinExpr& add_constant(double c);
    // merges duplicate variables and drops zero coefficients
    void compact();
};

struct Variable {
    std::string name;
    double lower = 0.0;
    double upper = kInf;
    VarKind kind = VarKind::Continuous;
};

struct Row {
    std::string name;
    std::vector<Term> terms;
    Sense sense = Sense::GreaterEqual;
    double rhs = 0.0;
};

// || members ||_2 <= bound
struct SocRow {
    std::string name;
    std::vector<LinExpr> members;
    LinExpr bound;
};

struct ModelIR {
    std::vector<Variable> vars;
    std::vector<Row> rows;
    std::vector<SocRow> socs;
    std::vector<double> obj;
    double obj_constant = 0.0;

    int add_var(std::string name, double lower = 0.0, double upper = kInf,
                VarKind kind = VarKind::Continuous);
    int add_binary(std::string name);
    int add_row(std::string name, std::vector<Term> terms, Sense sense, double rhs);
    // constant part of lhs is moved to the right-hand side
    int add_row(std::string name, const LinExpr& lhs, Sense sense, double rhs = 0.0);
    void add_soc(std::string name, std::vector<LinExpr> members, LinExpr bound);
    void add_obj(int var, double coef);
    void add_obj(const LinExpr& e, double scale = 1.0);

    int num_vars() const { return static_cast<int>(vars.size()); }
    int num_rows() const { return static_cast<int>(rows.size()); }
    bool has_binaries() const;
    std::vector<int> binaries() const;

    // throws std::invalid_argument on dangling references or crossed bounds
    void validate() const;

    double objective_value(const std::vector<double>& x) const;
    double row_activity(int r, const std::vector<double>& x) const;
    // largest scaled violation of bounds and rows at x
    double max_violation(const std::vector<double>& x) const;
};

}  // namespace d3ro
