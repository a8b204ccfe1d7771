#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <fmt/format.h>

#include "d3ro/lp.hpp"

namespace d3ro {

namespace {

std::string sanitize(const std::string& raw, std::set<std::string>& used, const std::string& fallback) {
    std::string s;
    for (char c : raw) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
    while (!s.empty() && s.back() == '_') s.pop_back();
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == 'e' || s[0] == 'E') s = fallback + s;
    std::string out = s;
    for (int k = 1; used.count(out); ++k) out = fmt::format("{}_{}", s, k);
    used.insert(out);
    return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_terms(std::ostringstream& os, const std::vector<Term>& terms, const std::vector<std::string>& names) {
    bool first = true;
    for (const auto& t : terms) {
        if (first) os << (t.coef < 0 ? "- " : "");
        else os << (t.coef < 0 ? " - " : " + ");
        os << num(std::abs(t.coef)) << ' ' << names[t.var];
        first = false;
    }
    if (first) os << "0";
}

const char* sense_str(Sense s) {
    switch (s) {
        case Sense::LessEqual: return "<=";
        case Sense::GreaterEqual: return ">=";
        default: return "=";
    }
}

}  // namespace

std::string write_lp_string(const ModelIR& in) {
    // cone members become auxiliary variables tied by equality rows
    ModelIR model = in;
    std::vector<std::pair<std::vector<int>, int>> cones;
    for (const auto& s : in.socs) {
        std::vector<int> members;
        for (std::size_t k = 0; k < s.members.size(); ++k) {
            const int v = model.add_var(fmt::format("{}_m{}", s.name, k), -kInf, kInf);
            LinExpr e = s.members[k];
            e.add(v, -1.0);
            model.add_row(fmt::format("{}_def{}", s.name, k), e, Sense::Equal, 0.0);
            members.push_back(v);
        }
        const int t = model.add_var(fmt::format("{}_t", s.name), 0.0, kInf);
        LinExpr e = s.bound;
        e.add(t, -1.0);
        model.add_row(fmt::format("{}_tdef", s.name), e, Sense::Equal, 0.0);
        cones.emplace_back(std::move(members), t);
    }

    std::set<std::string> used;
    std::vector<std::string> names;
    for (int j = 0; j < model.num_vars(); ++j) names.push_back(sanitize(model.vars[j].name, used, "v"));

    std::ostringstream os;
    os << "\\ d3ro model: " << model.num_vars() << " variables, " << model.num_rows() << " rows, "
       << in.socs.size() << " cones\n";
    os << "Minimize\n obj: ";
    std::vector<Term> obj;
    for (int j = 0; j < model.num_vars(); ++j)
        if (model.obj[j] != 0.0) obj.push_back({j, model.obj[j]});
    write_terms(os, obj, names);
    if (model.obj_constant != 0.0) os << (model.obj_constant < 0 ? " - " : " + ") << num(std::abs(model.obj_constant));
    os << "\nSubject To\n";
    std::set<std::string> rused(used);
    for (int r = 0; r < model.num_rows(); ++r) {
        const auto& row = model.rows[r];
        os << ' ' << sanitize(row.name, rused, "c") << ": ";
        write_terms(os, row.terms, names);
        os << ' ' << sense_str(row.sense) << ' ' << num(row.rhs) << '\n';
    }
    for (std::size_t c = 0; c < cones.size(); ++c) {
        os << ' ' << sanitize(in.socs[c].name, rused, "q") << ": [ ";
        bool first = true;
        for (int v : cones[c].first) {
            os << (first ? "" : " + ") << names[v] << " ^2";
            first = false;
        }
        os << " - " << names[cones[c].second] << " ^2 ] <= 0\n";
    }
    os << "Bounds\n";
    for (int j = 0; j < model.num_vars(); ++j) {
        const auto& v = model.vars[j];
        if (v.kind == VarKind::Binary) {
            if (v.lower == v.upper) os << ' ' << names[j] << " = " << num(v.lower) << '\n';
            continue;
        }
        const bool lo_inf = v.lower == -kInf, up_inf = v.upper == kInf;
        if (lo_inf && up_inf) os << ' ' << names[j] << " free\n";
        else if (v.lower == v.upper) os << ' ' << names[j] << " = " << num(v.lower) << '\n';
        else if (v.lower == 0.0 && up_inf) continue;
        else if (up_inf) os << ' ' << names[j] << " >= " << num(v.lower) << '\n';
        else os << ' ' << (lo_inf ? "-inf" : num(v.lower)) << " <= " << names[j] << " <= " << num(v.upper) << '\n';
    }
    os << "Binary\n";
    for (int j = 0; j < model.num_vars(); ++j) {
        const auto& v = model.vars[j];
        if (v.kind != VarKind::Binary) continue;
        os << ' ' << names[j] << '\n';
    }
    os << "End\n";
    return os.str();
}

void export_model(const ModelIR& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << write_lp_string(model);
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

struct Tokens {
    std::vector<std::string> t;
    std::size_t i = 0;
    bool done() const { return i >= t.size(); }
    const std::string& peek() const { return t[i]; }
    std::string next() { return t[i++]; }
};

Tokens tokenize(const std::string& line) {
    Tokens out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '<' || c == '>' || c == '=') {
            std::string op(1, c);
            ++i;
            if (i < line.size() && line[i] == '=') op += line[i++];
            out.t.push_back(op == "=<" ? "<=" : op == "=>" ? ">=" : op);
        } else if (c == '+' || c == '-' || c == '[' || c == ']' || c == ':' || c == '^') {
            out.t.emplace_back(1, c);
            ++i;
        } else {
            std::size_t j = i;
            while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
                   std::string("+-[]:^<>=").find(line[j]) == std::string::npos) {
                // keep exponent signs inside numbers
                ++j;
                if (j < line.size() && (line[j] == '+' || line[j] == '-') && (line[j - 1] == 'e' || line[j - 1] == 'E') &&
                    (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '.'))
                    ++j;
            }
            out.t.push_back(line.substr(i, j - i));
            i = j;
        }
    }
    return out;
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '.' ||
                                            s == "inf" || s == "infinity");
}

double parse_num(const std::string& s) {
    if (s == "inf" || s == "infinity" || s == "+inf") return kInf;
    return std::stod(s);
}

}  // namespace

ModelIR read_lp_string(const std::string& text) {
    ModelIR model;
    std::unordered_map<std::string, int> index;
    auto var = [&](const std::string& name) {
        auto it = index.find(name);
        if (it != index.end()) return it->second;
        const int j = model.add_var(name);
        index.emplace(name, j);
        return j;
    };

    // parses "[+-] [coef] name ..." until a sense token or end; returns terms and constant
    auto parse_expr = [&](Tokens& tk, std::vector<Term>& terms, double& constant) {
        double sign = 1.0;
        while (!tk.done()) {
            const std::string& p = tk.peek();
            if (p == "<=" || p == ">=" || p == "=" || p == "<" || p == ">" || p == "]") break;
            if (p == "+") {
                tk.next();
                continue;
            }
            if (p == "-") {
                tk.next();
                sign = -sign;
                continue;
            }
            double coef = 1.0;
            if (is_number(p)) {
                coef = parse_num(tk.next());
                if (tk.done() || is_number(tk.peek()) || tk.peek() == "+" || tk.peek() == "-" || tk.peek() == "<=" ||
                    tk.peek() == ">=" || tk.peek() == "=") {
                    constant += sign * coef;
                    sign = 1.0;
                    continue;
                }
            }
            const std::string name = tk.next();
            terms.push_back({var(name), sign * coef});
            sign = 1.0;
        }
    };

    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        if (auto c = line.find('\\'); c != std::string::npos) line = line.substr(0, c);
        std::string low;
        for (char c : line) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        const auto trimmed = low.substr(0, low.find_last_not_of(" \t\r") + 1);
        const auto key = trimmed.substr(trimmed.find_first_not_of(" \t") == std::string::npos ? trimmed.size()
                                                                                             : trimmed.find_first_not_of(" \t"));
        if (key.empty()) continue;
        if (key == "minimize" || key == "minimise" || key == "min") {
            section = "obj";
            continue;
        }
        if (key == "subject to" || key == "st" || key == "s.t.") {
            section = "rows";
            continue;
        }
        if (key == "bounds") {
            section = "bounds";
            continue;
        }
        if (key == "binary" || key == "binaries") {
            section = "binary";
            continue;
        }
        if (key == "end") break;

        Tokens tk = tokenize(line);
        if (section == "obj") {
            if (tk.t.size() >= 2 && tk.t[1] == ":") tk.i = 2;
            std::vector<Term> terms;
            double constant = 0.0;
            parse_expr(tk, terms, constant);
            for (const auto& t : terms) model.add_obj(t.var, t.coef);
            model.obj_constant += constant;
        } else if (section == "rows") {
            std::string name = fmt::format("c{}", model.num_rows() + model.socs.size());
            if (tk.t.size() >= 2 && tk.t[1] == ":") {
                name = tk.t[0];
                tk.i = 2;
            }
            if (!tk.done() && tk.peek() == "[") {
                tk.next();
                std::vector<LinExpr> members;
                LinExpr bound;
                double sign = 1.0;
                while (!tk.done() && tk.peek() != "]") {
                    const std::string p = tk.next();
                    if (p == "+") continue;
                    if (p == "-") {
                        sign = -1.0;
                        continue;
                    }
                    LinExpr e;
                    e.add(var(p), 1.0);
                    if (!tk.done() && tk.peek() == "^") {
                        tk.next();
                        tk.next();
                    }
                    if (sign < 0) bound = e;
                    else members.push_back(e);
                    sign = 1.0;
                }
                model.add_soc(name, std::move(members), std::move(bound));
                continue;
            }
            std::vector<Term> terms;
            double constant = 0.0;
            parse_expr(tk, terms, constant);
            if (tk.done()) throw std::runtime_error("row without sense: " + line);
            const std::string s = tk.next();
            const Sense sense = (s == "<=" || s == "<") ? Sense::LessEqual : (s == ">=" || s == ">") ? Sense::GreaterEqual : Sense::Equal;
            double sign = 1.0;
            if (!tk.done() && tk.peek() == "-") {
                tk.next();
                sign = -1.0;
            }
            const double rhs = sign * parse_num(tk.next());
            model.add_row(name, terms, sense, rhs - constant);
        } else if (section == "bounds") {
            // forms: x free | x = v | x >= v | x <= v | l <= x <= u
            auto read_val = [&](void) {
                double sign = 1.0;
                if (tk.peek() == "-") {
                    tk.next();
                    sign = -1.0;
                } else if (tk.peek() == "+") {
                    tk.next();
                }
                std::string v = tk.next();
                for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                return sign * parse_num(v);
            };
            const std::string first = tk.peek();
            if (is_number(first) || first == "-" || first == "+" || first == "-inf") {
                double lo = first == "-inf" ? (tk.next(), -kInf) : read_val();
                tk.next();
                const int j = var(tk.next());
                model.vars[j].lower = lo;
                if (!tk.done()) {
                    tk.next();
                    model.vars[j].upper = read_val();
                }
            } else {
                const int j = var(tk.next());
                std::string op = tk.next();
                std::string lowop;
                for (char c : op) lowop += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                if (lowop == "free") {
                    model.vars[j].lower = -kInf;
                    model.vars[j].upper = kInf;
                } else {
                    const double v = read_val();
                    if (op == "=") model.vars[j].lower = model.vars[j].upper = v;
                    else if (op == ">=" || op == ">") model.vars[j].lower = v;
                    else model.vars[j].upper = v;
                }
            }
        } else if (section == "binary") {
            for (const auto& name : tk.t) {
                const int j = var(name);
                model.vars[j].kind = VarKind::Binary;
                model.vars[j].lower = std::max(model.vars[j].lower, 0.0);
                model.vars[j].upper = std::min(model.vars[j].upper, 1.0);
            }
        }
    }
    return model;
}

}  // namespace d3ro
