#pragma once

// Problem-definition files (strict JSON), report serialization and CSV
// traces.  Unknown fields in input files are errors; reports embed the tool
// version and the run configuration so identical runs produce identical
// bytes.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bvp/boundary.hpp"
#include "bvp/discretize.hpp"
#include "bvp/homotopy.hpp"
#include "bvp/operators.hpp"
#include "bvp/spectral.hpp"
#include "bvp/version.hpp"
#include "bvp/winding.hpp"

namespace bvp {

using Json = nlohmann::ordered_json;

struct ProjectionModification {
    bool add = true;
    int mode = 0;
    int fiber = 0;
};

struct LoadedProblem {
    std::string name;
    BvpProblem problem;
    // per component: finite-rank modifications of the spectral projection
    std::vector<std::vector<ProjectionModification>> modifications;
};

namespace detail {

inline void require_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ParseError(where + ": unknown field '" + it.key() + "'");
}

inline MatrixSymbol parse_matrix_symbol(const Json& j, int default_degree,
                                        const std::string& where) {
    require_keys(j, {"degree", "entries"}, where);
    if (!j.contains("entries")) throw ParseError(where + ": missing 'entries'");
    const Json& e = j.at("entries");
    if (!e.is_array() || e.empty() || !e[0].is_array())
        throw ParseError(where + ": 'entries' must be an array of rows");
    const int rows = static_cast<int>(e.size());
    const int cols = static_cast<int>(e[0].size());
    std::vector<std::string> flat;
    for (const auto& row : e) {
        if (static_cast<int>(row.size()) != cols)
            throw ParseError(where + ": ragged entry rows");
        for (const auto& s : row) {
            if (!s.is_string()) throw ParseError(where + ": entries must be strings");
            flat.push_back(s.get<std::string>());
        }
    }
    const int degree = j.value("degree", default_degree);
    try {
        return MatrixSymbol::from_strings(rows, cols, degree, flat);
    } catch (const ParseError& err) {
        throw ParseError(where + ": " + err.what());
    }
}

inline ManifoldKind parse_manifold(const std::string& s) {
    if (s == "interval") return ManifoldKind::Interval;
    if (s == "cylinder") return ManifoldKind::Cylinder;
    if (s == "disk") return ManifoldKind::Disk;
    if (s == "annulus") return ManifoldKind::Annulus;
    throw ParseError("unknown manifold '" + s + "'");
}

}  // namespace detail

inline LoadedProblem parse_problem(const Json& j, const std::string& name = "problem") {
    detail::require_keys(j, {"name", "manifold", "order", "coefficients", "interior",
                             "boundary_condition", "projection"},
                         name);
    for (const char* key : {"manifold", "order", "coefficients", "boundary_condition"})
        if (!j.contains(key)) throw ParseError(name + ": missing field '" + std::string(key) + "'");

    LoadedProblem out;
    out.name = j.value("name", name);
    out.problem.manifold = ModelManifold{detail::parse_manifold(j.at("manifold").get<std::string>())};

    const int order = j.at("order").get<int>();
    const Json& co = j.at("coefficients");
    if (!co.is_array() || static_cast<int>(co.size()) != order + 1)
        throw ParseError(name + ": 'coefficients' must list order+1 matrices");
    std::vector<MatrixSymbol> coeffs;
    for (int k = 0; k <= order; ++k)
        coeffs.push_back(detail::parse_matrix_symbol(co[k], k,
                                                     name + ".coefficients[" + std::to_string(k) + "]"));
    std::optional<MatrixSymbol> interior;
    if (j.contains("interior"))
        interior = detail::parse_matrix_symbol(j.at("interior"), order, name + ".interior");
    out.problem.op = CollarOperator(order, std::move(coeffs), std::move(interior));

    const Json& bc = j.at("boundary_condition");
    const int ncomp = out.problem.manifold.boundary_components();
    if (!bc.is_array() || static_cast<int>(bc.size()) != ncomp)
        throw ParseError(name + ": 'boundary_condition' must list one entry per boundary component");
    for (int c = 0; c < ncomp; ++c) {
        const std::string where = name + ".boundary_condition[" + std::to_string(c) + "]";
        detail::require_keys(bc[c], {"jets", "target_rank"}, where);
        if (!bc[c].contains("jets") || !bc[c].contains("target_rank"))
            throw ParseError(where + ": needs 'jets' and 'target_rank'");
        const Json& jets = bc[c].at("jets");
        if (!jets.is_array() || static_cast<int>(jets.size()) != order)
            throw ParseError(where + ": 'jets' must list order matrices");
        std::vector<MatrixSymbol> jsyms;
        for (int l = 0; l < order; ++l)
            jsyms.push_back(detail::parse_matrix_symbol(jets[l], 0,
                                                        where + ".jets[" + std::to_string(l) + "]"));
        out.problem.conditions.emplace_back(std::move(jsyms), bc[c].at("target_rank").get<int>());
    }

    out.problem.projections.assign(ncomp, std::nullopt);
    out.modifications.assign(ncomp, {});
    if (j.contains("projection")) {
        const Json& pr = j.at("projection");
        if (!pr.is_array() || static_cast<int>(pr.size()) != ncomp)
            throw ParseError(name + ": 'projection' must list one entry (or null) per component");
        for (int c = 0; c < ncomp; ++c) {
            if (pr[c].is_null()) continue;
            const std::string where = name + ".projection[" + std::to_string(c) + "]";
            detail::require_keys(pr[c], {"symbol", "pullback", "modifications"}, where);
            if (!pr[c].contains("symbol")) throw ParseError(where + ": missing 'symbol'");
            ProjectionSymbol ps;
            ps.symbol = detail::parse_matrix_symbol(pr[c].at("symbol"), 0, where + ".symbol");
            ps.pullback = pr[c].value("pullback", false);
            out.problem.projections[c] = std::move(ps);
            if (pr[c].contains("modifications")) {
                for (const auto& m : pr[c].at("modifications")) {
                    detail::require_keys(m, {"action", "mode", "fiber"}, where + ".modifications");
                    ProjectionModification pm;
                    const std::string action = m.value("action", std::string("add"));
                    if (action != "add" && action != "remove")
                        throw ParseError(where + ": modification action must be add or remove");
                    pm.add = action == "add";
                    pm.mode = m.value("mode", 0);
                    pm.fiber = m.value("fiber", 0);
                    out.modifications[c].push_back(pm);
                }
            }
        }
    }
    return out;
}

inline LoadedProblem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid JSON in '" + path + "': " + e.what());
    }
    return parse_problem(j, path);
}

/// Per-mode projection fiber of a declared symbol with finite-rank
/// modifications applied at individual Fourier modes.
inline ModeProjectionFn make_mode_projection(const ProjectionSymbol& sym,
                                             const std::vector<ProjectionModification>& mods,
                                             double tol = 1e-8) {
    MatrixSymbol s = sym.symbol;
    return [s, mods, tol](int n) {
        Matrix v = s.eval(0.0, 0.0, static_cast<double>(n), 0.0);
        Matrix p = spectral_projector(v, [](Complex z) { return z.real() > 0.5; });
        for (const auto& m : mods) {
            if (m.mode != n) continue;
            if (m.fiber < 0 || m.fiber >= p.rows())
                throw GeometryError("modification fiber index out of range");
            Vector e = Vector::Zero(p.rows());
            e(m.fiber) = 1.0;
            if (m.add) {
                Vector w = e - p * e;
                if (w.norm() < tol) throw GeometryError("mode to add already lies in the range");
                w.normalize();
                p += w * w.adjoint();
            } else {
                Vector w = p * e;
                if (w.norm() < tol) throw GeometryError("mode to remove is not in the range");
                w.normalize();
                p -= w * w.adjoint();
            }
        }
        return p;
    };
}

// ---- report serialization ------------------------------------------------

inline Json to_json(const EllipticityReport& r) {
    Json j;
    j["elliptic"] = r.elliptic;
    j["global_min_singular_value"] = r.global_min;
    j["rank_mismatch"] = r.rank_mismatch;
    j["grid"] = r.grid;
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

inline Json to_json(const InteriorEllipticityReport& r) {
    Json j;
    j["elliptic"] = r.elliptic;
    j["min_abs_det"] = r.min_abs_det;
    j["min_singular_value"] = r.min_singular_value;
    return j;
}

inline Json to_json(const ObstructionReport& r) {
    Json j;
    j["rank_plus_direction"] = r.rank_plus_dir;
    j["rank_minus_direction"] = r.rank_minus_dir;
    j["obstruction"] = r.obstruction;
    j["obstructed"] = r.obstructed;
    j["max_frame_jump"] = r.max_frame_jump;
    j["verdict"] = r.verdict;
    return j;
}

inline Json to_json(const IndexReport& r) {
    Json j;
    j["dim_ker"] = r.results.back().dim_ker;
    j["dim_coker"] = r.results.back().dim_coker;
    j["index"] = r.index;
    j["stable"] = r.stable;
    j["verdict"] = r.verdict;
    Json res = Json::array();
    for (const auto& s : r.results) {
        Json e;
        e["resolution"] = s.resolution;
        e["rows"] = s.rows;
        e["cols"] = s.cols;
        e["dim_ker"] = s.dim_ker;
        e["dim_coker"] = s.dim_coker;
        e["index"] = s.index;
        e["gap"] = std::isinf(s.gap) ? Json("inf") : Json(s.gap);
        res.push_back(e);
    }
    j["resolutions"] = res;
    return j;
}

inline Json to_json(const PathCertificate& c) {
    Json j;
    j["valid"] = c.valid;
    j["steps"] = c.steps.size();
    j["min_interior_margin"] = c.min_interior;
    j["min_boundary_margin"] = c.min_boundary;
    if (!c.detail.empty()) j["detail"] = c.detail;
    return j;
}

inline Json to_json(const DyadicRational& d) { return Json(d.str()); }

inline Json to_json(const Formula35Report& r) {
    Json j;
    j["lhs_index"] = r.lhs_index;
    j["double_index"] = r.double_index;
    Json dv = Json::array();
    for (const auto& d : r.d_values) dv.push_back(d.str());
    j["d_values"] = dv;
    j["lhs"] = r.lhs.str();
    j["rhs"] = r.rhs.str();
    j["equal"] = r.equal;
    j["verdict"] = r.verdict;
    return j;
}

inline Json to_json(const CobordismReport& r) {
    Json j;
    j["winding_plus"] = r.wind_plus;
    j["winding_minus"] = r.wind_minus;
    j["index"] = r.index;
    j["extendable_claimed"] = r.extendable_claimed;
    j["consistent"] = r.consistent;
    j["verdict"] = r.verdict;
    return j;
}

inline Json to_json(const ExcisionReport& r) {
    Json j;
    j["relative_windings"] = r.relative_windings;
    j["windings_zero"] = r.windings_zero;
    j["first"] = to_json(r.first);
    j["second"] = to_json(r.second);
    j["equal"] = r.equal;
    j["verdict"] = r.verdict;
    return j;
}

inline Json make_report(const std::string& command, const Json& config, const Json& payload) {
    Json j;
    j["tool"] = "bvpcli";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    j["report"] = payload;
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

inline void write_report(const std::string& path, const Json& report) {
    write_text(path, report.dump(2) + "\n");
}

// ---- CSV traces ------------------------------------------------------------

inline std::string csv_of_sl_report(const EllipticityReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "component,x,xi,min_singular_value,roots\n";
    for (const auto& s : r.samples) {
        out << s.component << "," << s.x << "," << s.xi << "," << s.min_singular_value << ",\"";
        for (size_t k = 0; k < s.roots.size(); ++k) {
            if (k) out << ";";
            out << s.roots[k].real() << (s.roots[k].imag() < 0 ? "-" : "+")
                << std::abs(s.roots[k].imag()) << "i";
        }
        out << "\"\n";
    }
    return out.str();
}

inline std::string csv_of_certificate(const PathCertificate& c) {
    std::ostringstream out;
    out.precision(17);
    out << "step,parameter,interior_margin,boundary_margin,max_principal_angle\n";
    for (size_t k = 0; k < c.steps.size(); ++k) {
        const auto& s = c.steps[k];
        out << k << "," << s.param << "," << s.interior << "," << s.boundary << ","
            << s.max_angle << "\n";
    }
    return out.str();
}

inline std::string csv_of_singular_values(const DiscreteOperator& op) {
    std::ostringstream out;
    out.precision(17);
    out << "block,singular_value\n";
    if (op.decoupled) {
        for (const auto& b : op.blocks) {
            Eigen::BDCSVD<Matrix> svd(b.mat);
            for (int k = 0; k < svd.singularValues().size(); ++k)
                out << b.mode << "," << svd.singularValues()(k) << "\n";
        }
    } else {
        Eigen::BDCSVD<Matrix> svd(op.mat);
        for (int k = 0; k < svd.singularValues().size(); ++k)
            out << 0 << "," << svd.singularValues()(k) << "\n";
    }
    return out.str();
}

}  // namespace bvp
