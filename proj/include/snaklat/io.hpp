#pragma once

#include "snaklat/asymptotics.hpp"
#include "snaklat/branch.hpp"
#include "snaklat/codim2.hpp"
#include "snaklat/dynamics.hpp"
#include "snaklat/spectral.hpp"
#include "snaklat/version.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace snaklat::io {

using json = nlohmann::json;

inline std::ofstream open_out(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
    out << std::setprecision(17);
    return out;
}

inline void write_json(const std::filesystem::path& p, const json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

inline json grid_json(const GridSpec& g) {
    return {{"kind", to_string(g.kind())}, {"N_d", g.nd()}, {"symmetry", to_string(g.symmetry())}};
}

inline json profile_json(const Field& f) {
    return {{"grid", grid_json(f.grid)}, {"values", std::vector<double>(f.values.data(), f.values.data() + f.values.size())}};
}

inline void write_profile_json(const std::filesystem::path& p, const Field& f) { write_json(p, profile_json(f)); }

inline void write_profile_csv(const std::filesystem::path& p, const Field& f) {
    auto out = open_out(p);
    out << "n,m,value\n";
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        const Site s = f.grid.site(i);
        out << s.n << ',' << s.m << ',' << f.values[static_cast<Eigen::Index>(i)] << '\n';
    }
}

inline Field read_profile_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorKind::Io, "cannot read '" + p.string() + "'");
    try {
        const json j = json::parse(in);
        const json& g = j.at("grid");
        const int nd = g.at("N_d").get<int>();
        const std::string kind = g.at("kind").get<std::string>();
        const std::string sym = g.at("symmetry").get<std::string>();
        const Symmetry s = sym == "off_site" ? Symmetry::OffSite : sym == "on_site" ? Symmetry::OnSite : Symmetry::None;
        const GridSpec grid = kind == "wedge" ? GridSpec::wedge(nd, s) : GridSpec::full_square(nd, s);
        const auto v = j.at("values").get<std::vector<double>>();
        return Field(grid, Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Io, "malformed profile '" + p.string() + "': " + e.what());
    }
}

/// `index,mu,d,norm,n_unstable,event`; n_unstable is empty when untagged.
inline void write_branch_csv(const std::filesystem::path& p, const Branch& b) {
    std::vector<std::string> ev(b.points.size());
    for (const Event& e : b.events)
        if (e.index < ev.size()) ev[e.index] = ev[e.index].empty() ? to_string(e.kind) : ev[e.index] + "+" + to_string(e.kind);
    auto out = open_out(p);
    out << "index,mu,d,norm,n_unstable,event\n";
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const BranchPoint& q = b.points[i];
        out << i << ',' << q.mu << ',' << q.d << ',' << q.norm << ',';
        if (q.unstable_count) out << *q.unstable_count;
        out << ',' << ev[i] << '\n';
    }
}

inline json spectrum_json(const SpectrumReport& r) {
    json nz = json::array();
    for (const TaggedPair& t : r.near_zero) nz.push_back({{"lambda", t.lambda}, {"tag", to_string(t.tag)}});
    return {{"n_unstable", r.n_unstable}, {"n_zero", r.n_zero}, {"tau", r.tau}, {"near_zero", nz}};
}

/// `N,mu_N,d_N,nullity_check,converged`
inline void write_cusp_csv(const std::filesystem::path& p, const CuspSequence& s) {
    auto out = open_out(p);
    out << "N,mu_N,d_N,nullity_check,converged\n";
    for (const CuspRow& r : s.rows)
        out << r.N << ',' << r.mu << ',' << r.d << ',' << (r.nullity == 2 ? "pass" : "fail:" + std::to_string(r.nullity))
            << ',' << (r.converged ? "true" : "false") << '\n';
}

inline json cusp_fit_json(const GeometricFit& f) {
    return {{"mu_inf", f.mu_inf}, {"d_inf", f.d_inf}, {"rho", f.rho}, {"c_mu", f.c_mu}, {"c_d", f.c_d}, {"rms", f.rms}};
}

inline json fit_report_json(const FitReport& r) {
    json per = json::array();
    for (const FitSample& s : r.per_d)
        per.push_back({{"d_hat", s.d_hat},
                       {"d", r.normal.d_raw(s.d_hat)},
                       {"mu_hat", s.mu_hat},
                       {"mu", r.normal.mu_raw(s.mu_hat)},
                       {"deviation", s.deviation},
                       {"predicted", s.predicted}});
    return {{"ending", to_string(r.ending)},
            {"exponent", r.exponent},
            {"coefficient", r.coefficient},
            {"exponent_se", r.exponent_se},
            {"coefficient_se", r.coefficient_se},
            {"per_d", per}};
}

/// `t,deviation`
inline void write_trajectory_csv(const std::filesystem::path& p, const Trajectory& tr) {
    auto out = open_out(p);
    out << "t,deviation\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i) out << tr.times[i] << ',' << tr.deviation[i] << '\n';
}

/// Config echo, versions, seed and wall time of one run.
inline json manifest_json(const std::string& command, const json& config, std::uint64_t seed, double wall_seconds,
                          int exit_code, const std::vector<std::string>& outputs) {
    std::ostringstream eig;
    eig << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
    return {{"command", command},
            {"config", config},
            {"seed", seed},
            {"versions", {{"snaklat", version}, {"eigen", eig.str()}, {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}, {"compiler", __VERSION__}}},
            {"wall_time_s", wall_seconds},
            {"exit_code", exit_code},
            {"outputs", outputs}};
}

}  // namespace snaklat::io
