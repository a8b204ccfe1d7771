#include "d3ro/json_io.hpp"

#include <fstream>
#include <stdexcept>

namespace d3ro {

using nlohmann::json;

namespace {

json vec_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_json(const Mat& m) {
    json a = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

Vec json_vec(const json& j) {
    Vec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
    return v;
}

// cols is needed when the matrix has no rows
Mat json_mat(const json& j, int cols = -1) {
    const int r = static_cast<int>(j.size());
    const int c = r > 0 ? static_cast<int>(j[0].size()) : std::max(cols, 0);
    Mat m(r, c);
    for (int a = 0; a < r; ++a) {
        if (static_cast<int>(j[a].size()) != c) throw DimensionMismatch("ragged matrix in instance JSON");
        for (int b = 0; b < c; ++b) m(a, b) = j[a][b].get<double>();
    }
    return m;
}

json affine_json(const AffineMap& a) { return {{"const", vec_json(a.constant)}, {"coef", mat_json(a.coef)}}; }

AffineMap json_affine(const json& j, int I) {
    Vec c = json_vec(j.at("const"));
    Mat a = j.contains("coef") ? json_mat(j.at("coef"), I) : Mat::Zero(c.size(), I);
    if (a.rows() == 0 && c.size() == 0) a.resize(0, I);
    return AffineMap(c, a);
}

std::string sense_str(Sense s) { return s == Sense::LessEqual ? "<=" : s == Sense::Equal ? "=" : ">="; }

Sense str_sense(const std::string& s) {
    if (s == "<=") return Sense::LessEqual;
    if (s == "=" || s == "==") return Sense::Equal;
    if (s == ">=") return Sense::GreaterEqual;
    throw std::invalid_argument("unknown sense: " + s);
}

json prob_json(const ModeProbabilityModel& m) {
    if (const auto* a = std::get_if<AffineProb>(&m))
        return {{"kind", "affine"}, {"base", vec_json(a->base)}, {"slopes", mat_json(a->slopes)}};
    if (const auto* s = std::get_if<LinearScalingProb>(&m))
        return {{"kind", "linear_scaling"}, {"base", vec_json(s->base)}, {"scaled", s->scaled}, {"var", s->var}};
    const auto& d = std::get<InterdictionProb>(m);
    json states = json::array();
    for (int l = 0; l < d.states.rows(); ++l) {
        json row = json::array();
        for (int i = 0; i < d.states.cols(); ++i) row.push_back(d.states(l, i));
        states.push_back(row);
    }
    return {{"kind", "interdiction"}, {"sigma0", vec_json(d.sigma0)}, {"sigma1", vec_json(d.sigma1)}, {"states", states}};
}

ModeProbabilityModel json_prob(const json& j, int I) {
    const std::string kind = j.at("kind");
    if (kind == "affine") return AffineProb{json_vec(j.at("base")), json_mat(j.at("slopes"), I)};
    if (kind == "linear_scaling")
        return LinearScalingProb{json_vec(j.at("base")), j.at("scaled").get<std::vector<int>>(), j.value("var", 0)};
    if (kind == "interdiction") {
        InterdictionProb d{json_vec(j.at("sigma0")), json_vec(j.at("sigma1")), {}};
        const auto& st = j.at("states");
        d.states.resize(static_cast<int>(st.size()), static_cast<int>(d.sigma0.size()));
        for (int l = 0; l < d.states.rows(); ++l)
            for (int i = 0; i < d.states.cols(); ++i) d.states(l, i) = st[l][i].get<int>();
        return d;
    }
    throw std::invalid_argument("unknown mode_prob kind: " + kind);
}

json support_json(const Support& s) {
    switch (s.kind) {
        case Support::Kind::Discrete: {
            json pts = json::array();
            for (const auto& p : s.points) pts.push_back(vec_json(p));
            return {{"kind", "discrete"}, {"points", pts}};
        }
        case Support::Kind::Grid: return {{"kind", "grid"}, {"values", s.values}};
        case Support::Kind::Box: return {{"kind", "box"}, {"lower", vec_json(s.lower)}, {"upper", vec_json(s.upper)}};
    }
    return {};
}

Support json_support(const json& j) {
    const std::string kind = j.at("kind");
    if (kind == "discrete") {
        std::vector<Vec> pts;
        for (const auto& p : j.at("points")) pts.push_back(json_vec(p));
        return Support::discrete(std::move(pts));
    }
    if (kind == "grid") return Support::grid(j.at("values").get<std::vector<std::vector<double>>>());
    if (kind == "box") return Support::box(json_vec(j.at("lower")), json_vec(j.at("upper")));
    throw std::invalid_argument("unknown support kind: " + kind);
}

std::string norm_str(NormOrder n) { return n == NormOrder::One ? "1" : n == NormOrder::Two ? "2" : "inf"; }

NormOrder str_norm(const json& j) {
    const std::string s = j.is_string() ? j.get<std::string>() : std::to_string(j.get<int>());
    if (s == "1") return NormOrder::One;
    if (s == "2") return NormOrder::Two;
    if (s == "inf") return NormOrder::Inf;
    throw std::invalid_argument("unknown norm order: " + s);
}

json mode_json(const ModeAmbiguity& mode) {
    if (const auto* m = std::get_if<MomentMode>(&mode))
        return {{"type", "moment"},
                {"f", m->kind == MomentKind::First ? "first" : "first_second"},
                {"lower", affine_json(m->lower)},
                {"upper", affine_json(m->upper)},
                {"support", support_json(m->support)}};
    const auto& w = std::get<WassersteinMode>(mode);
    json samples = json::array();
    for (const auto& s : w.samples) samples.push_back(affine_json(s));
    return {{"type", "wasserstein"}, {"samples", samples}, {"radius", w.radius},
            {"C", mat_json(w.C)},    {"d", vec_json(w.d)},  {"norm", norm_str(w.norm)}};
}

ModeAmbiguity json_mode(const json& j, int I, int N) {
    const std::string type = j.at("type");
    if (type == "moment") {
        MomentMode m;
        m.kind = j.value("f", std::string("first")) == "first" ? MomentKind::First : MomentKind::FirstSecond;
        m.lower = json_affine(j.at("lower"), I);
        m.upper = json_affine(j.at("upper"), I);
        m.support = json_support(j.at("support"));
        return m;
    }
    if (type == "wasserstein") {
        WassersteinMode w;
        for (const auto& s : j.at("samples")) w.samples.push_back(json_affine(s, I));
        w.radius = j.at("radius");
        w.C = json_mat(j.at("C"), N);
        w.d = json_vec(j.at("d"));
        w.norm = str_norm(j.value("norm", json("1")));
        return w;
    }
    throw std::invalid_argument("unknown mode type: " + type);
}

}  // namespace

json instance_to_json(const D3ROInstance& inst, const GroundTruth* gt) {
    const auto& f = inst.first;
    json side = json::array();
    for (const auto& r : f.side) side.push_back({{"coef", vec_json(r.coef)}, {"sense", sense_str(r.sense)}, {"rhs", r.rhs}});
    json first = {{"costs", vec_json(f.costs)}, {"kind", f.kind == FirstStageKind::Binary ? "binary" : "box"},
                  {"side_constraints", side}};
    if (f.kind == FirstStageKind::Box) {
        first["lower"] = vec_json(f.lower);
        first["upper"] = vec_json(f.upper);
    }
    const auto& s = inst.second;
    json tcoef = json::array();
    for (int i = 0; i < inst.I(); ++i) {
        Mat ti(s.S(), s.N());
        for (int n = 0; n < s.N(); ++n) ti.col(n) = s.T[n].coef.col(i);
        tcoef.push_back(mat_json(ti));
    }
    json senses = json::array();
    for (Sense v : s.sense) senses.push_back(sense_str(v));
    json xl = json::array();
    for (int j = 0; j < s.J(); ++j) xl.push_back(std::isfinite(s.x_lower[j]) ? json(s.x_lower[j]) : json("-inf"));
    Mat t0(s.S(), s.N());
    for (int n = 0; n < s.N(); ++n) t0.col(n) = s.T[n].constant;
    json second = {{"Q", mat_json(s.Q)},
                   {"q", vec_json(s.q)},
                   {"W", mat_json(s.W)},
                   {"T", {{"const", mat_json(t0)}, {"coef", tcoef}}},
                   {"R", affine_json(s.R)},
                   {"row_sense", senses},
                   {"x_lower", xl},
                   {"N", s.N()}};
    json modes = json::array();
    for (const auto& m : inst.modes) modes.push_back(mode_json(m));
    json out = {{"first_stage", first},
                {"second_stage", second},
                {"modes", modes},
                {"mode_prob", prob_json(inst.mode_prob)},
                {"rho", inst.rho},
                {"mode_distance", to_string(inst.distance)}};
    if (gt) {
        json means = json::array(), sig = json::array();
        for (const auto& m : gt->mean) means.push_back(affine_json(m));
        for (const auto& v : gt->sigma) sig.push_back(vec_json(v));
        out["ground_truth"] = {{"mean", means},           {"sigma", sig},
                               {"clamp_mean", gt->clamp_mean}, {"clip_zero", gt->clip_zero},
                               {"mode_prob", prob_json(gt->prob)}};
    }
    return out;
}

InstanceBundle instance_from_json(const json& j) {
    InstanceBundle b;
    auto& inst = b.instance;
    const auto& f = j.at("first_stage");
    inst.first.costs = json_vec(f.at("costs"));
    const int I = inst.first.I();
    inst.first.kind = f.value("kind", std::string("binary")) == "binary" ? FirstStageKind::Binary : FirstStageKind::Box;
    if (inst.first.kind == FirstStageKind::Box) {
        inst.first.lower = json_vec(f.at("lower"));
        inst.first.upper = json_vec(f.at("upper"));
    }
    for (const auto& r : f.value("side_constraints", json::array()))
        inst.first.side.push_back({json_vec(r.at("coef")), str_sense(r.at("sense")), r.at("rhs").get<double>()});

    const auto& s = j.at("second_stage");
    auto& core = inst.second;
    core.q = json_vec(s.at("q"));
    const int N = s.contains("N") ? s.at("N").get<int>() : static_cast<int>(s.at("Q").at(0).size());
    core.Q = json_mat(s.at("Q"), N);
    core.W = json_mat(s.at("W"), core.J());
    const int S = static_cast<int>(core.W.rows());
    const auto& t = s.at("T");
    Mat t0 = t.contains("const") ? json_mat(t.at("const"), N) : Mat::Zero(S, N);
    if (t0.rows() == 0) t0 = Mat::Zero(S, N);
    std::vector<Mat> tc;
    for (const auto& m : t.value("coef", json::array())) tc.push_back(json_mat(m, N));
    core.T.clear();
    for (int n = 0; n < N; ++n) {
        Mat a = Mat::Zero(S, I);
        for (int i = 0; i < static_cast<int>(tc.size()); ++i)
            if (tc[i].rows() == S) a.col(i) = tc[i].col(n);
        core.T.emplace_back(t0.col(n), a);
    }
    core.R = json_affine(s.at("R"), I);
    core.sense.assign(S, Sense::GreaterEqual);
    if (s.contains("row_sense"))
        for (int r = 0; r < S; ++r) core.sense[r] = str_sense(s.at("row_sense")[r]);
    core.x_lower = Vec::Zero(core.J());
    if (s.contains("x_lower"))
        for (int k = 0; k < core.J(); ++k) {
            const auto& v = s.at("x_lower")[k];
            core.x_lower[k] = v.is_string() ? -kInf : v.get<double>();
        }

    for (const auto& m : j.at("modes")) inst.modes.push_back(json_mode(m, I, N));
    inst.mode_prob = json_prob(j.at("mode_prob"), I);
    inst.rho = j.value("rho", 0.0);
    inst.distance = mode_distance_from_string(j.value("mode_distance", std::string("variation")));

    if (j.contains("ground_truth")) {
        const auto& g = j.at("ground_truth");
        GroundTruth gt;
        for (const auto& m : g.at("mean")) gt.mean.push_back(json_affine(m, I));
        for (const auto& v : g.at("sigma")) gt.sigma.push_back(json_vec(v));
        gt.clamp_mean = g.value("clamp_mean", false);
        gt.clip_zero = g.value("clip_zero", true);
        gt.prob = json_prob(g.at("mode_prob"), I);
        b.ground_truth = std::move(gt);
    }
    return b;
}

void save_instance(const std::string& path, const D3ROInstance& inst, const GroundTruth* gt) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << instance_to_json(inst, gt).dump(1) << '\n';
}

InstanceBundle load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return instance_from_json(json::parse(in));
}

}  // namespace d3ro
