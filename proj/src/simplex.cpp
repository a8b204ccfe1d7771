#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "d3ro/lp.hpp"

namespace d3ro {

std::string to_string(Status s) {
    switch (s) {
        case Status::Optimal: return "Optimal";
        case Status::Infeasible: return "Infeasible";
        case Status::Unbounded: return "Unbounded";
        case Status::IterationLimit: return "IterationLimit";
        case Status::TimeLimit: return "TimeLimit";
    }
    return "Unknown";
}

long default_pivot_cap() {
    if (const char* env = std::getenv("D3RO_PIVOT_CAP")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return v;
    }
    return 1000000;
}

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

enum VStat : std::uint8_t { kBasic = 0, kLower = 1, kUpper = 2, kZero = 3 };

constexpr int kRefactorEvery = 64;
constexpr double kPivotTol = 1e-9;
constexpr double kPrimalTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr long kBlandAfter = 1000;

double pow2_round(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) return 1.0;
    return std::ldexp(1.0, static_cast<int>(std::lround(std::log2(s))));
}

}  // namespace

struct SimplexSolver::Impl {
    int m = 0;
    int n = 0;
    SolverOptions opts;
    long pivot_cap = 0;

    std::vector<int> cbeg, rind;
    std::vector<double> aval;
    std::vector<double> colscale, rowscale;
    std::vector<double> lb, ub, cost;
    double obj_constant = 0.0;
    double cost_scale = 1.0;
    std::vector<double> orig_obj;

    std::vector<double> x;
    std::vector<std::uint8_t> st;
    std::vector<int> head;
    std::vector<int> pos;
    std::vector<double> devex;

    // factorization
    mutable Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    struct Eta {
        int r;
        double piv;
        std::vector<int> idx;
        std::vector<double> val;
    };
    std::vector<Eta> etas;
    bool factor_valid = false;
    bool primal_dirty = true;

    Impl(const ModelIR& model, const SolverOptions& o) : opts(o) {
        model.validate();
        m = model.num_rows();
        n = model.num_vars();
        pivot_cap = opts.pivot_cap > 0 ? opts.pivot_cap : default_pivot_cap();

        // column-major copy
        std::vector<int> count(n + 1, 0);
        for (const auto& r : model.rows)
            for (const auto& t : r.terms) ++count[t.var + 1];
        cbeg.assign(n + 1, 0);
        for (int j = 0; j < n; ++j) cbeg[j + 1] = cbeg[j] + count[j + 1];
        rind.resize(cbeg[n]);
        aval.resize(cbeg[n]);
        std::vector<int> fill(cbeg.begin(), cbeg.end() - 1);
        for (int i = 0; i < m; ++i)
            for (const auto& t : model.rows[i].terms) {
                rind[fill[t.var]] = i;
                aval[fill[t.var]++] = t.coef;
            }

        compute_scaling();
        for (int j = 0; j < n; ++j)
            for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) aval[p] *= rowscale[rind[p]] * colscale[j];

        lb.resize(n + m);
        ub.resize(n + m);
        cost.assign(n + m, 0.0);
        orig_obj = model.obj;
        obj_constant = model.obj_constant;
        double cmax = 0.0;
        for (int j = 0; j < n; ++j) {
            lb[j] = model.vars[j].lower / colscale[j];
            ub[j] = model.vars[j].upper / colscale[j];
            cost[j] = model.obj[j] * colscale[j];
            cmax = std::max(cmax, std::abs(cost[j]));
        }
        cost_scale = cmax > 0.0 ? pow2_round(1.0 / cmax) : 1.0;
        for (int j = 0; j < n; ++j) cost[j] *= cost_scale;
        for (int i = 0; i < m; ++i) {
            const auto& r = model.rows[i];
            const double rhs = r.rhs * rowscale[i];
            lb[n + i] = r.sense == Sense::LessEqual ? -kInf : rhs;
            ub[n + i] = r.sense == Sense::GreaterEqual ? kInf : rhs;
        }
        slack_basis();
    }

    void compute_scaling() {
        rowscale.assign(m, 1.0);
        colscale.assign(n, 1.0);
        std::vector<double> rmin(m), rmax(m);
        for (int pass = 0; pass < 6; ++pass) {
            std::fill(rmin.begin(), rmin.end(), kInf);
            std::fill(rmax.begin(), rmax.end(), 0.0);
            for (int j = 0; j < n; ++j)
                for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) {
                    const double a = std::abs(aval[p]) * colscale[j];
                    if (a == 0.0) continue;
                    rmin[rind[p]] = std::min(rmin[rind[p]], a);
                    rmax[rind[p]] = std::max(rmax[rind[p]], a);
                }
            for (int i = 0; i < m; ++i)
                rowscale[i] = rmax[i] > 0.0 ? 1.0 / std::sqrt(rmin[i] * rmax[i]) : 1.0;
            for (int j = 0; j < n; ++j) {
                double lo = kInf, hi = 0.0;
                for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) {
                    const double a = std::abs(aval[p]) * rowscale[rind[p]];
                    if (a == 0.0) continue;
                    lo = std::min(lo, a);
                    hi = std::max(hi, a);
                }
                colscale[j] = hi > 0.0 ? 1.0 / std::sqrt(lo * hi) : 1.0;
            }
        }
        for (auto& s : rowscale) s = pow2_round(s);
        for (auto& s : colscale) s = pow2_round(s);
    }

    double nonbasic_value(int j, std::uint8_t s) const {
        switch (s) {
            case kLower: return lb[j];
            case kUpper: return ub[j];
            default: return 0.0;
        }
    }

    std::uint8_t default_status(int j) const {
        if (std::isfinite(lb[j])) return kLower;
        if (std::isfinite(ub[j])) return kUpper;
        return kZero;
    }

    void slack_basis() {
        x.assign(n + m, 0.0);
        st.assign(n + m, kLower);
        head.resize(m);
        pos.assign(n + m, -1);
        for (int j = 0; j < n; ++j) {
            st[j] = default_status(j);
            x[j] = nonbasic_value(j, st[j]);
        }
        for (int i = 0; i < m; ++i) {
            head[i] = n + i;
            pos[n + i] = i;
            st[n + i] = kBasic;
        }
        devex.assign(n + m, 1.0);
        factor_valid = false;
        primal_dirty = true;
    }

    // v += a * column j
    void col_axpy(int j, double a, std::vector<double>& v) const {
        if (j >= n) {
            v[j - n] -= a;
            return;
        }
        for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) v[rind[p]] += a * aval[p];
    }

    double col_dot(int j, const std::vector<double>& v) const {
        if (j >= n) return -v[j - n];
        double s = 0.0;
        for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) s += aval[p] * v[rind[p]];
        return s;
    }

    bool refactor() {
        etas.clear();
        if (m == 0) {
            factor_valid = true;
            return true;
        }
        std::vector<Eigen::Triplet<double, int>> trip;
        trip.reserve(static_cast<std::size_t>(m) * 2);
        for (int k = 0; k < m; ++k) {
            const int j = head[k];
            if (j >= n) {
                trip.emplace_back(j - n, k, -1.0);
            } else {
                for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) trip.emplace_back(rind[p], k, aval[p]);
            }
        }
        SpMat B(m, m);
        B.setFromTriplets(trip.begin(), trip.end());
        B.makeCompressed();
        lu.compute(B);
        factor_valid = lu.info() == Eigen::Success;
        return factor_valid;
    }

    void ftran(std::vector<double>& v) const {
        if (m == 0) return;
        Eigen::Map<Eigen::VectorXd> vm(v.data(), m);
        Eigen::VectorXd sol = lu.solve(vm);
        vm = sol;
        for (const auto& e : etas) {
            double& vr = v[e.r];
            if (vr == 0.0) continue;
            vr /= e.piv;
            const double t = vr;
            for (std::size_t k = 0; k < e.idx.size(); ++k) v[e.idx[k]] -= e.val[k] * t;
        }
    }

    void btran(std::vector<double>& v) const {
        if (m == 0) return;
        for (auto it = etas.rbegin(); it != etas.rend(); ++it) {
            double s = v[it->r];
            for (std::size_t k = 0; k < it->idx.size(); ++k) s -= it->val[k] * v[it->idx[k]];
            v[it->r] = s / it->piv;
        }
        Eigen::Map<Eigen::VectorXd> vm(v.data(), m);
        Eigen::VectorXd sol = lu.transpose().solve(vm);
        vm = sol;
    }

    void push_eta(int r, const std::vector<double>& alpha) {
        Eta e;
        e.r = r;
        e.piv = alpha[r];
        for (int i = 0; i < m; ++i)
            if (i != r && std::abs(alpha[i]) > 1e-14) {
                e.idx.push_back(i);
                e.val.push_back(alpha[i]);
            }
        etas.push_back(std::move(e));
    }

    void compute_primal() {
        std::vector<double> rhs(m, 0.0);
        for (int j = 0; j < n + m; ++j) {
            if (st[j] == kBasic) continue;
            x[j] = nonbasic_value(j, st[j]);
            if (x[j] != 0.0) col_axpy(j, -x[j], rhs);
        }
        ftran(rhs);
        for (int k = 0; k < m; ++k) x[head[k]] = rhs[k];
        primal_dirty = false;
    }

    double infeas(int j) const {
        const double tol = kPrimalTol;
        if (x[j] < lb[j] - tol * (1.0 + std::abs(lb[j]))) return lb[j] - x[j];
        if (x[j] > ub[j] + tol * (1.0 + std::abs(ub[j]))) return x[j] - ub[j];
        return 0.0;
    }

    // makes sure the current basis is factorized; falls back to the slack basis
    void ensure_factor() {
        if (factor_valid) return;
        if (!refactor()) {
            for (int j = 0; j < n + m; ++j) {
                if (st[j] != kBasic || j >= n) continue;
                st[j] = default_status(j);
                if (std::isfinite(lb[j]) && std::isfinite(ub[j]))
                    st[j] = std::abs(x[j] - lb[j]) <= std::abs(x[j] - ub[j]) ? kLower : kUpper;
            }
            for (int i = 0; i < m; ++i) {
                head[i] = n + i;
                st[n + i] = kBasic;
            }
            std::fill(pos.begin(), pos.end(), -1);
            for (int i = 0; i < m; ++i) pos[n + i] = i;
            if (!refactor()) throw std::runtime_error("slack basis factorization failed");
        }
        primal_dirty = true;
    }

    SolveReport run();
    void fill_solution(SolveReport& rep, const std::vector<double>& pi);
};

SolveReport SimplexSolver::Impl::run() {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    SolveReport rep;

    ensure_factor();
    if (primal_dirty) compute_primal();

    std::vector<double> cb(m), pi(m), alpha(m), rho(m), d(n + m, 0.0), prow(n + m, 0.0);
    long degenerate_run = 0;
    int verify_rounds = 0;
    bool phase1 = false;
    std::vector<std::uint8_t> skip(n + m, 0);
    bool any_skip = false;

    // one feasibility tolerance for phase detection and both ratio-test passes
    const auto feas_tol = [&](int j) {
        return kPrimalTol * (1.0 + std::max(std::isfinite(lb[j]) ? std::abs(lb[j]) : 0.0,
                                            std::isfinite(ub[j]) ? std::abs(ub[j]) : 0.0));
    };

    const auto finish = [&](Status s) {
        rep.status = s;
        rep.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        return rep;
    };

    while (true) {
        if (rep.pivots >= pivot_cap) {
            fill_solution(rep, pi);
            return finish(Status::IterationLimit);
        }
        if ((rep.pivots & 63) == 0 &&
            std::chrono::duration<double>(clock::now() - t0).count() > opts.time_limit_s) {
            fill_solution(rep, pi);
            return finish(Status::TimeLimit);
        }
        if (static_cast<int>(etas.size()) >= kRefactorEvery) {
            factor_valid = false;
            ensure_factor();
            compute_primal();
        }

        // phase and basic costs
        phase1 = false;
        for (int k = 0; k < m; ++k) {
            const int j = head[k];
            const double tol = feas_tol(j);
            if (x[j] < lb[j] - tol) {
                cb[k] = -1.0;
                phase1 = true;
            } else if (x[j] > ub[j] + tol) {
                cb[k] = 1.0;
                phase1 = true;
            } else {
                cb[k] = 0.0;
            }
        }
        if (!phase1)
            for (int k = 0; k < m; ++k) cb[k] = cost[head[k]];
        pi = cb;
        btran(pi);

        const bool bland = degenerate_run > kBlandAfter;
        int q = -1;
        int dir = 0;
        double best = 0.0;
        for (int j = 0; j < n + m; ++j) {
            if (st[j] == kBasic || skip[j]) continue;
            if (lb[j] == ub[j]) continue;
            const double cj = phase1 ? 0.0 : cost[j];
            const double dj = cj - col_dot(j, pi);
            d[j] = dj;
            int dj_dir = 0;
            if (dj < -kDualTol && st[j] != kUpper) dj_dir = 1;
            else if (dj > kDualTol && st[j] != kLower) dj_dir = -1;
            if (dj_dir == 0) continue;
            if (bland) {
                q = j;
                dir = dj_dir;
                break;
            }
            const double merit = dj * dj / devex[j];
            if (merit > best) {
                best = merit;
                q = j;
                dir = dj_dir;
            }
        }

        if (q < 0) {
            if (any_skip) {
                std::fill(skip.begin(), skip.end(), 0);
                any_skip = false;
                factor_valid = false;
                ensure_factor();
                compute_primal();
                continue;
            }
            // verify on a fresh factorization before concluding
            if (!etas.empty() && verify_rounds < 3) {
                ++verify_rounds;
                factor_valid = false;
                ensure_factor();
                compute_primal();
                continue;
            }
            fill_solution(rep, pi);
            return finish(phase1 ? Status::Infeasible : Status::Optimal);
        }

        // entering column in basis coordinates
        std::fill(alpha.begin(), alpha.end(), 0.0);
        col_axpy(q, 1.0, alpha);
        ftran(alpha);

        // ratio test: basic k moves at rate delta_k = -dir * alpha_k
        double tmax = kInf;
        for (int k = 0; k < m; ++k) {
            const double a = alpha[k];
            if (std::abs(a) < kPivotTol) continue;
            const int j = head[k];
            const double delta = -dir * a;
            const double tol = feas_tol(j);
            double t = kInf;
            if (x[j] < lb[j] - tol) {
                if (delta > 0) t = (lb[j] - x[j]) / delta;
            } else if (x[j] > ub[j] + tol) {
                if (delta < 0) t = (ub[j] - x[j]) / delta;
            } else if (delta < 0) {
                if (std::isfinite(lb[j])) t = (x[j] - lb[j] + (bland ? 0.0 : tol)) / -delta;
            } else {
                if (std::isfinite(ub[j])) t = (ub[j] + (bland ? 0.0 : tol) - x[j]) / delta;
            }
            tmax = std::min(tmax, std::max(t, 0.0));
        }
        const double range = ub[q] - lb[q];
        int r = -1;
        double step = 0.0;
        double rmag = 0.0;
        bool to_upper = false;
        if (tmax < kInf) {
            for (int k = 0; k < m; ++k) {
                const double a = alpha[k];
                if (std::abs(a) < kPivotTol) continue;
                const int j = head[k];
                const double delta = -dir * a;
                const double tol = feas_tol(j);
                double t = kInf;
                bool up = false;
                if (x[j] < lb[j] - tol) {
                    if (delta > 0) t = (lb[j] - x[j]) / delta;
                } else if (x[j] > ub[j] + tol) {
                    if (delta < 0) {
                        t = (ub[j] - x[j]) / delta;
                        up = true;
                    }
                } else if (delta < 0) {
                    if (std::isfinite(lb[j])) t = (x[j] - lb[j]) / -delta;
                } else {
                    if (std::isfinite(ub[j])) {
                        t = (ub[j] - x[j]) / delta;
                        up = true;
                    }
                }
                t = std::max(t, 0.0);
                if (t > tmax) continue;
                bool take;
                if (bland)
                    take = r < 0 || t < step - 1e-12 || (t <= step + 1e-12 && j < head[r]);
                else
                    take = std::abs(a) > rmag;
                if (take) {
                    r = k;
                    rmag = std::abs(a);
                    step = t;
                    to_upper = up;
                }
            }
        }

        const bool flip = range < kInf && (r < 0 || range <= step);
        if (r < 0 && !flip) {
            if (phase1) {
                skip[q] = 1;
                any_skip = true;
                continue;
            }
            // unbounded ray in original space
            rep.ray.assign(n, 0.0);
            if (q < n) rep.ray[q] = dir * colscale[q];
            for (int k = 0; k < m; ++k)
                if (head[k] < n) rep.ray[head[k]] = -dir * alpha[k] * colscale[head[k]];
            fill_solution(rep, pi);
            return finish(Status::Unbounded);
        }
        if (flip) step = range;

        ++rep.pivots;
        if (step <= 1e-12) ++degenerate_run;
        else degenerate_run = 0;
        if (any_skip) {
            std::fill(skip.begin(), skip.end(), 0);
            any_skip = false;
        }

        if (step != 0.0) {
            for (int k = 0; k < m; ++k)
                if (alpha[k] != 0.0) x[head[k]] -= dir * step * alpha[k];
            x[q] += dir * step;
        }

        if (flip) {
            st[q] = dir > 0 ? kUpper : kLower;
            x[q] = nonbasic_value(q, st[q]);
            continue;
        }

        const int leave = head[r];
        const double arq = alpha[r];

        // devex reference weights
        if (!bland) {
            std::fill(rho.begin(), rho.end(), 0.0);
            rho[r] = 1.0;
            btran(rho);
            const double wq = devex[q];
            for (int j = 0; j < n + m; ++j) {
                if (st[j] == kBasic || j == q) continue;
                const double arj = col_dot(j, rho);
                if (arj == 0.0) continue;
                const double ratio = arj / arq;
                devex[j] = std::max(devex[j], ratio * ratio * wq);
            }
            devex[leave] = std::max(wq / (arq * arq), 1.0);
            if (devex[leave] > 1e8) std::fill(devex.begin(), devex.end(), 1.0);
        }

        st[leave] = to_upper ? kUpper : kLower;
        if (!std::isfinite(nonbasic_value(leave, st[leave]))) st[leave] = default_status(leave);
        x[leave] = nonbasic_value(leave, st[leave]);
        pos[leave] = -1;
        head[r] = q;
        pos[q] = r;
        st[q] = kBasic;
        push_eta(r, alpha);
    }
}

void SimplexSolver::Impl::fill_solution(SolveReport& rep, const std::vector<double>& pi) {
    rep.primal.assign(n, 0.0);
    for (int j = 0; j < n; ++j) rep.primal[j] = x[j] * colscale[j];
    rep.duals.assign(m, 0.0);
    for (int i = 0; i < m; ++i) rep.duals[i] = pi[i] * rowscale[i] / cost_scale;
    rep.reduced.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double dj = orig_obj[j];
        for (int p = cbeg[j]; p < cbeg[j + 1]; ++p) dj -= aval[p] / (rowscale[rind[p]] * colscale[j]) * rep.duals[rind[p]];
        rep.reduced[j] = dj;
    }
    double obj = obj_constant;
    for (int j = 0; j < n; ++j) obj += orig_obj[j] * rep.primal[j];
    rep.objective = obj;
}

SimplexSolver::SimplexSolver(const ModelIR& model, const SolverOptions& opts)
    : impl_(std::make_unique<Impl>(model, opts)) {}

SimplexSolver::~SimplexSolver() = default;

void SimplexSolver::set_bounds(int var, double lower, double upper) {
    auto& s = *impl_;
    const double lo = lower / s.colscale[var];
    const double hi = upper / s.colscale[var];
    s.lb[var] = lo;
    s.ub[var] = hi;
    if (s.st[var] != kBasic) {
        std::uint8_t ns = s.st[var];
        if (ns == kLower && !std::isfinite(lo)) ns = s.default_status(var);
        if (ns == kUpper && !std::isfinite(hi)) ns = s.default_status(var);
        if (ns == kZero && (std::isfinite(lo) || std::isfinite(hi))) ns = s.default_status(var);
        s.st[var] = ns;
        s.primal_dirty = true;
    }
}

void SimplexSolver::set_time_limit(double seconds) { impl_->opts.time_limit_s = seconds; }

double SimplexSolver::lower(int var) const { return impl_->lb[var] * impl_->colscale[var]; }
double SimplexSolver::upper(int var) const { return impl_->ub[var] * impl_->colscale[var]; }

SolveReport SimplexSolver::solve() { return impl_->run(); }

SimplexSolver::Basis SimplexSolver::basis() const { return {impl_->head, impl_->st}; }

void SimplexSolver::set_basis(const Basis& b) {
    auto& s = *impl_;
    if (static_cast<int>(b.basic.size()) != s.m || static_cast<int>(b.status.size()) != s.n + s.m)
        throw std::invalid_argument("basis size mismatch");
    s.head = b.basic;
    s.st = b.status;
    std::fill(s.pos.begin(), s.pos.end(), -1);
    for (int k = 0; k < s.m; ++k) s.pos[s.head[k]] = k;
    for (int j = 0; j < s.n + s.m; ++j) {
        if (s.st[j] == kBasic) continue;
        if ((s.st[j] == kLower && !std::isfinite(s.lb[j])) || (s.st[j] == kUpper && !std::isfinite(s.ub[j])))
            s.st[j] = s.default_status(j);
    }
    s.factor_valid = false;
    s.primal_dirty = true;
}

SolveReport solve_lp(const ModelIR& model, const SolverOptions& opts) {
    if (!model.socs.empty()) throw std::invalid_argument("solve_lp: model has cone rows");
    SimplexSolver solver(model, opts);
    return solver.solve();
}

}  // namespace d3ro
